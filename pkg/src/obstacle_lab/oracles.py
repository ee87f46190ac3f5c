"""Closed-form solutions used as ground truth.

Three exact solutions of div(A grad u) = f chi_{u>0} with A = I, f = 1:

  halfspace(nu)   u = (1/2) (<x, nu> v 0)^2          regular model, 2-homog.
  quadratic(B)    u = <B x, x>, B sym PSD, Tr B = 1/2  singular model, 2-homog.
  annulus(a)      2D radial: u = 0 for |x| <= a and
                  u(r) = (r^2 - a^2)/4 - (a^2/2) log(r/a) for r > a,
                  with u and u' vanishing on the circle r = a.

The dimensional energy level theta is never hard-coded: it is produced by
``reference_energy`` as the quadrature value of Psi_w(1) for the half-space
model, so quadrature bias cancels when energies of computed solutions are
compared against it.  Quadratic models sit at exactly 2 theta.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .quadrature import ball_rule, sphere_rule


@dataclass
class OracleSolution:
    """A closed-form solution with evaluators and free-boundary metadata."""

    kind: str
    n: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    nu: np.ndarray | None = None
    B: np.ndarray | None = None
    a: float | None = None

    def free_boundary_points(self, count: int = 8) -> np.ndarray:
        """Representative points on the exact free boundary."""
        if self.kind == "halfspace":
            # points on the hyperplane <x, nu> = 0
            tang = _any_orthonormal(self.nu)
            t = np.linspace(-0.5, 0.5, count)
            return t[:, None] * tang[None, :]
        if self.kind == "quadratic":
            return np.zeros((1, self.n))
        if self.kind == "annulus":
            theta = 2.0 * np.pi * np.arange(count) / count
            return self.a * np.column_stack([np.cos(theta), np.sin(theta)])
        raise ValueError(self.kind)


def _any_orthonormal(nu: np.ndarray) -> np.ndarray:
    e = np.zeros_like(nu)
    e[int(np.argmin(np.abs(nu)))] = 1.0
    t = e - np.dot(e, nu) * nu
    return t / np.linalg.norm(t)


def halfspace(nu, n: int = 2) -> OracleSolution:
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)

    def value(pts):
        pts = np.asarray(pts, dtype=float)
        s = np.clip(pts @ nu, 0.0, None)
        return 0.5 * s ** 2

    def gradient(pts):
        pts = np.asarray(pts, dtype=float)
        s = np.clip(pts @ nu, 0.0, None)
        return s[..., None] * nu

    return OracleSolution("halfspace", nu.size, value, gradient, nu=nu)


def quadratic(B=None, n: int = 2) -> OracleSolution:
    if B is None:
        B = np.eye(n) / (2 * n)
    B = np.asarray(B, dtype=float)
    B = 0.5 * (B + B.T)
    vals = np.linalg.eigvalsh(B)
    if vals.min() < -1e-12:
        raise ValueError("quadratic model matrix must be positive semidefinite")
    if abs(np.trace(B) - 0.5) > 1e-12:
        raise ValueError("quadratic model matrix must have trace 1/2")

    def value(pts):
        pts = np.asarray(pts, dtype=float)
        return np.einsum("...i,ij,...j->...", pts, B, pts)

    def gradient(pts):
        pts = np.asarray(pts, dtype=float)
        return 2.0 * pts @ B.T

    return OracleSolution("quadratic", B.shape[0], value, gradient, B=B)


def annulus(a: float = 0.5) -> OracleSolution:
    """2D radial solution vanishing on the disc |x| <= a (A = I, f = 1)."""
    if not 0.0 < a < 1.0:
        raise ValueError("annulus radius must lie in (0, 1)")

    def value(pts):
        pts = np.asarray(pts, dtype=float)
        r = np.linalg.norm(pts, axis=-1)
        out = np.zeros_like(r)
        m = r > a
        rm = r[m]
        out[m] = (rm ** 2 - a ** 2) / 4.0 - (a ** 2 / 2.0) * np.log(rm / a)
        return out

    def gradient(pts):
        pts = np.asarray(pts, dtype=float)
        r = np.linalg.norm(pts, axis=-1)
        out = np.zeros_like(pts)
        m = r > a
        rm = r[m]
        du = rm / 2.0 - a ** 2 / (2.0 * rm)   # radial derivative, 0 at r = a
        out[m] = (du / rm)[..., None] * pts[m]
        return out

    return OracleSolution("annulus", 2, value, gradient, a=a)


_ORACLES = {"halfspace": halfspace, "quadratic": quadratic, "annulus": annulus}


def by_name(spec: str, n: int = 2) -> OracleSolution:
    """Oracle from a config string like 'annulus:0.5' or 'halfspace:1,0'."""
    name, _, arg = spec.partition(":")
    if name == "halfspace":
        nu = np.fromstring(arg, sep=",") if arg else np.eye(n)[0]
        return halfspace(nu, n)
    if name == "quadratic":
        if arg:
            flat = np.fromstring(arg, sep=",")
            return quadratic(flat.reshape(n, n))
        return quadratic(n=n)
    if name == "annulus":
        return annulus(float(arg) if arg else 0.5)
    raise ValueError(f"unknown oracle {name!r}")


def evaluate(oracle: OracleSolution, x) -> tuple[np.ndarray, np.ndarray]:
    """Value and gradient at x (both continuous across the free boundary)."""
    x = np.asarray(x, dtype=float)
    return oracle.value(x), oracle.gradient(x)


_REFERENCE_CACHE: dict[tuple, float] = {}


def psi_of(solution, n: int, r: float = 1.0,
           n_radial: int = 96, **kw) -> float:
    """Psi(r) = r^-(n+2) int_{B_r} (|grad v|^2 + 2 v) - 2 r^-(n+3) int_{dB_r} v^2."""
    pts, w = ball_rule(np.zeros(n), r, n_radial=n_radial, **kw)
    g = solution.gradient(pts)
    vol = float(np.sum(w * (np.sum(g * g, axis=-1) + 2.0 * solution.value(pts))))
    spts, sw = sphere_rule(np.zeros(n), r, **kw)
    sur = float(np.sum(sw * solution.value(spts) ** 2))
    return vol / r ** (n + 2) - 2.0 * sur / r ** (n + 3)


def reference_energy(oracle_kind: str, quantity: str = "psi", n: int = 2) -> float:
    """Energy level of a model solution, by high-order quadrature of Psi_w(1).

    'psi' and 'phi' coincide for these 2-homogeneous models (Phi is Psi with
    coefficients frozen at the origin, and both data are already (I, 1)).
    The half-space level is the dimensional constant theta; quadratic models
    sit at 2 theta.  Values are cached per (kind, n).
    """
    if quantity not in ("psi", "phi"):
        raise ValueError("quantity must be 'psi' or 'phi'")
    key = (oracle_kind, n)
    if key not in _REFERENCE_CACHE:
        if oracle_kind == "halfspace":
            model = halfspace(np.eye(n)[0], n)
        elif oracle_kind == "quadratic":
            model = quadratic(n=n)
        else:
            raise ValueError("reference energies exist for the 2-homogeneous models only")
        _REFERENCE_CACHE[key] = psi_of(model, n, n_radial=128,
                                       n_angular=1024, n_lat=96, n_lon=192)
    return _REFERENCE_CACHE[key]


def theta_constant(n: int = 2) -> float:
    """The dimensional constant theta = Psi(half-space model)(1)."""
    return reference_energy("halfspace", "psi", n)
