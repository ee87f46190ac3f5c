"""Coefficient data (A, f) with prescribed regularity, and its normalization.

The problem data of the variable-coefficient obstacle problem is a symmetric
elliptic matrix field A with two-sided bound

    lam^-1 |xi|^2 <= <A(x) xi, xi> <= lam |xi|^2,

and a linear term f >= c0 > 0 whose modulus of continuity omega satisfies a
Dini condition, int_0^1 omega(t)/t dt < infty (plus a log-weighted variant).
Fields here are generated constructively from presets with known moduli, so
the regularity hypotheses hold by construction and never need to be verified
through fractional Sobolev norms; the Sobolev exponents (s, p, t0) ride along
as metadata and feed only the exponent Theta below.

Also provided: the radial weight mu(x) = <A(x) x/|x|, x/|x|> entering the
boundary energy, and the pointwise normalization

    L(x0) = f(x0)^(-1/2) A(x0)^(1/2),
    A~(y) = A(x0)^(-1/2) A(x0 + L y) A(x0)^(-1/2),   f~(y) = f(x0 + L y)/f(x0),

which turns the data at the base point into (I, 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import quad

EIG_CLAMP = 1e-14
# Singular-scale cutoff for the Dini integrals: on (0, 1/e] the log-power
# modulus takes its closed form |log t|^(-b), which keeps reference values
# exact; above the cutoff the modulus is capped at 1 and contributes nothing
# singular.
DINI_CUTOFF = math.exp(-1.0)


class FieldValidationError(ValueError):
    """Raised when generated coefficient data violates its invariants."""


# ---------------------------------------------------------------------------
# moduli of continuity


@dataclass(frozen=True)
class Modulus:
    """Named modulus of continuity omega(t) on (0, 1].

    kinds:
      holder        omega(t) = amplitude * t^alpha,      alpha in (0, 1]
      log_power     omega(t) = amplitude * min(1, |log t|^-b),   b > 0
      constant_zero omega == 0
    """

    kind: str
    param: float = 0.0
    a_exponent: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        if self.kind not in ("holder", "log_power", "constant_zero"):
            raise ValueError(f"unknown modulus kind {self.kind!r}")
        if self.kind == "holder" and not 0.0 < self.param <= 1.0:
            raise ValueError("holder modulus needs alpha in (0, 1]")
        if self.kind == "log_power" and self.param <= 0.0:
            raise ValueError("log_power modulus needs b > 0")
        if self.a_exponent < 1.0:
            raise ValueError("a_exponent must be >= 1")

    @staticmethod
    def holder(alpha: float, a: float = 1.0, amplitude: float = 1.0) -> "Modulus":
        return Modulus("holder", alpha, a, amplitude)

    @staticmethod
    def log_power(b: float, a: float = 1.0, amplitude: float = 1.0) -> "Modulus":
        return Modulus("log_power", b, a, amplitude)

    @staticmethod
    def zero() -> "Modulus":
        return Modulus("constant_zero")

    def omega(self, t):
        """Vectorized omega(t); omega(0+) = 0 for the non-constant kinds."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        if self.kind == "holder":
            out = self.amplitude * np.clip(t, 0.0, None) ** self.param
        elif self.kind == "log_power":
            pos = t > 0.0
            tt = np.where(pos, t, 0.5)
            with np.errstate(divide="ignore"):
                val = np.abs(np.log(tt)) ** (-self.param)
            out = self.amplitude * np.where(pos, np.minimum(1.0, val), 0.0)
        return out

    # Closed-form primitives, used by the quasi-monotonicity corrections.
    # The log_power forms are exact for r <= 1/e where omega is uncapped and
    # continue with omega == amplitude above.

    def dini_up_to(self, r: float) -> float:
        """int_0^r omega(t)/t dt (may be inf)."""
        if self.kind == "constant_zero" or r <= 0.0:
            return 0.0
        if self.kind == "holder":
            return self.amplitude * r ** self.param / self.param
        b = self.param
        if b <= 1.0:
            return math.inf
        core = min(r, DINI_CUTOFF)
        val = (-math.log(core)) ** (1.0 - b) / (b - 1.0)
        if r > DINI_CUTOFF:
            val += math.log(r) + 1.0
        return self.amplitude * val

    def double_dini_up_to(self, r: float) -> float:
        """int_0^r dt/t int_0^t omega(s)/s ds (may be inf)."""
        if self.kind == "constant_zero" or r <= 0.0:
            return 0.0
        if self.kind == "holder":
            return self.amplitude * r ** self.param / self.param ** 2
        b = self.param
        if b <= 2.0:
            return math.inf
        core = min(r, DINI_CUTOFF)
        val = (-math.log(core)) ** (2.0 - b) / ((b - 1.0) * (b - 2.0))
        if r > DINI_CUTOFF:
            # inner integral in the capped region is 1/(b-1) + 1 + log t
            lr = math.log(r)
            val += (1.0 / (b - 1.0) + 1.0) * (lr + 1.0) + 0.5 * (lr ** 2 - 1.0)
        return self.amplitude * val


def dini_integrals(m: Modulus, a: float) -> tuple[float, float]:
    """Dini and log-weighted Dini integrals of a modulus at unit scale.

    Returns (int omega(t)/t dt, int omega(t)/t |log t|^a dt), both over the
    singular range (0, 1/e] where the modulus takes its closed form.  Values
    are computed by adaptive quadrature in the variable tau = -log t on
    (1, |log eps|] with the (0, eps) tail added from the kind's closed form,
    so the convergence decision never depends on the cutoff: divergence is
    classified analytically (holder always converges; log_power(b) has a
    finite Dini integral iff b > 1 and a finite weighted integral iff
    b - a > 1).
    """
    if a < 1.0:
        raise ValueError("a must be >= 1")
    if m.kind == "constant_zero":
        return 0.0, 0.0

    eps = 1e-8
    tau_max = -math.log(eps)

    def tail(weight_exp: float) -> float:
        # int_{tau_max}^inf omega(e^-tau) tau^weight_exp dtau, closed form
        if m.kind == "holder":
            # omega = amplitude * e^(-alpha tau): bounded by explicit formula
            al = m.param
            val, _ = quad(lambda u: math.exp(-al * u) * u ** weight_exp,
                          tau_max, tau_max + 80.0 / al)
            return m.amplitude * val
        b = m.param
        ex = weight_exp - b
        if ex >= -1.0:
            return math.inf
        return m.amplitude * tau_max ** (ex + 1.0) / (-(ex + 1.0))

    def integral(weight_exp: float) -> float:
        if m.kind == "log_power" and m.param - weight_exp <= 1.0:
            return math.inf
        body, _ = quad(lambda u: float(m.omega(math.exp(-u))) * u ** weight_exp,
                       1.0, tau_max, limit=200)
        return body + tail(weight_exp)

    return integral(0.0), integral(a)


# ---------------------------------------------------------------------------
# coefficient fields


@dataclass
class CoefficientField:
    """Matrix field A, linear term f, and their regularity descriptors."""

    n: int
    A: Callable[[np.ndarray], np.ndarray]
    f: Callable[[np.ndarray], np.ndarray]
    lam: float
    A_modulus: Modulus
    f_modulus: Modulus
    sobolev_params: tuple[float, float, float]
    c0: float = 1.0
    preset: str = "custom"
    params: dict = field(default_factory=dict)
    a_seminorm: float = 0.0

    def A_at(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.A(pts)

    def f_at(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.f(pts)

    def theta(self) -> float:
        s, p, t0 = self.sobolev_params
        return theta_exponent(s, p, self.n, t0)


def mu(field: CoefficientField, x) -> np.ndarray:
    """Radial weight <A(x) nu, nu> with nu = x/|x|; equals 1 at the origin."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    norms = np.linalg.norm(pts, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    nu = pts / safe[:, None]
    a = field.A_at(pts)
    vals = np.einsum("kij,ki,kj->k", a, nu, nu)
    vals = np.where(norms > 0.0, vals, 1.0)
    return float(vals[0]) if single else vals


def validate_field(fld: CoefficientField, n_samples: int = 10_000,
                   seed: int = 0, box: float = 1.0) -> dict:
    """Sample symmetry, ellipticity and the lower bound on f.

    Raises FieldValidationError on the first violated invariant; returns a
    report with the measured margins otherwise.
    """
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-box, box, size=(n_samples, fld.n))
    xi = rng.normal(size=(n_samples, fld.n))
    xi /= np.linalg.norm(xi, axis=1)[:, None]
    a = fld.A_at(pts)
    sym = float(np.max(np.abs(a - np.swapaxes(a, 1, 2))))
    if sym > 1e-12:
        raise FieldValidationError(f"A not symmetric: max asymmetry {sym:.3e}")
    quad_form = np.einsum("kij,ki,kj->k", a, xi, xi)
    lo, hi = float(quad_form.min()), float(quad_form.max())
    if lo < 1.0 / fld.lam - 1e-12 or hi > fld.lam + 1e-12:
        raise FieldValidationError(
            f"ellipticity violated: <A xi,xi> in [{lo:.6f}, {hi:.6f}], "
            f"allowed [{1.0 / fld.lam:.6f}, {fld.lam:.6f}]")
    fv = fld.f_at(pts)
    fmin = float(fv.min())
    if fmin < fld.c0 - 1e-12:
        raise FieldValidationError(f"f >= c0 violated: min f = {fmin:.6f} < {fld.c0}")
    return {"symmetry_defect": sym, "ellipticity_range": (lo, hi), "f_min": fmin}


def _const_matrix(mat: np.ndarray) -> Callable:
    def A(pts):
        return np.broadcast_to(mat, (pts.shape[0],) + mat.shape).copy()
    return A


def _const_scalar(c: float) -> Callable:
    def f(pts):
        return np.full(pts.shape[0], c)
    return f


def make_field(preset: str, **params) -> CoefficientField:
    """Build a preset coefficient field and validate it by dense sampling.

    presets:
      identity              A = I, f = 1
      anisotropic           A = diag(d), f = const
      holder_perturbation   A(x) = I + |x|^gamma S, S symmetric small, f = 1
      perturbed_f           A = I, f(x) = 1 + amp * omega(|x|) * cos(m theta)
    """
    n = int(params.pop("n", 2))
    if n not in (2, 3):
        raise FieldValidationError("dimension must be 2 or 3")
    sobolev = tuple(params.pop("sobolev_params", (0.5, 3.0, 0.25)))

    if preset == "identity":
        fld = CoefficientField(
            n=n, A=_const_matrix(np.eye(n)), f=_const_scalar(1.0), lam=1.0,
            A_modulus=Modulus.zero(), f_modulus=Modulus.zero(),
            sobolev_params=sobolev, c0=1.0, preset=preset, params={"n": n})

    elif preset == "anisotropic":
        diag = np.asarray(params.pop("diag", [2.0, 1.0][:n]), dtype=float)
        f_const = float(params.pop("f", 1.0))
        if diag.size != n or np.any(diag <= 0.0):
            raise FieldValidationError("anisotropic preset needs positive diag of length n")
        if f_const <= 0.0:
            raise FieldValidationError("anisotropic preset needs f > 0")
        lam = float(max(diag.max(), 1.0 / diag.min()))
        fld = CoefficientField(
            n=n, A=_const_matrix(np.diag(diag)), f=_const_scalar(f_const), lam=lam,
            A_modulus=Modulus.zero(), f_modulus=Modulus.zero(),
            sobolev_params=sobolev, c0=f_const, preset=preset,
            params={"n": n, "diag": diag.tolist(), "f": f_const})

    elif preset == "holder_perturbation":
        gamma = float(params.pop("gamma", 0.5))
        S = np.asarray(params.pop("S", 0.1 * np.diag([1.0, -1.0][:n] + [0.0] * (n - 2))),
                       dtype=float)
        lam = float(params.pop("lam", 0.0))
        if not 0.0 < gamma <= 1.0:
            raise FieldValidationError("gamma must lie in (0, 1]")
        if S.shape != (n, n) or np.max(np.abs(S - S.T)) > 1e-14:
            raise FieldValidationError("S must be a symmetric n x n matrix")
        sig = float(np.linalg.norm(S, 2))
        reach = math.sqrt(n) ** gamma  # box corner |x| = sqrt(n)
        if not lam:
            lam = max(1.0 + sig * reach, 1.0 / max(1.0 - sig * reach, 1e-12))
            lam = float(math.ceil(lam * 100.0) / 100.0)
        if sig > (lam - 1.0) / lam + 1e-12:
            raise FieldValidationError(
                f"perturbation too large: |S| = {sig:.4f} > (lam-1)/lam = {(lam - 1.0) / lam:.4f}")
        if sig * reach >= 1.0 - 1.0 / lam:
            raise FieldValidationError("perturbation breaks ellipticity at the box corner")
        eye = np.eye(n)

        def A(pts, _S=S, _g=gamma):
            r = np.linalg.norm(pts, axis=1) ** _g
            return eye[None, :, :] + r[:, None, None] * _S[None, :, :]

        fld = CoefficientField(
            n=n, A=A, f=_const_scalar(1.0), lam=lam,
            A_modulus=Modulus.holder(gamma, amplitude=sig), f_modulus=Modulus.zero(),
            sobolev_params=sobolev, c0=1.0, preset=preset,
            params={"n": n, "gamma": gamma, "S": S.tolist(), "lam": lam},
            a_seminorm=sig)

    elif preset == "perturbed_f":
        modulus = params.pop("modulus", Modulus.log_power(3.0))
        amp = float(params.pop("amplitude", 0.05))
        mode = int(params.pop("angular_mode", 2))
        if not 0.0 <= amp < 1.0:
            raise FieldValidationError("amplitude must lie in [0, 1)")

        def f(pts, _m=modulus, _a=amp, _k=mode):
            r = np.linalg.norm(pts, axis=1)
            pert = _m.omega(r)
            if _k and pts.shape[1] == 2:
                theta = np.arctan2(pts[:, 1], pts[:, 0])
                pert = pert * np.cos(_k * theta)
            return 1.0 + _a * pert

        fld = CoefficientField(
            n=n, A=_const_matrix(np.eye(n)), f=f, lam=1.0,
            A_modulus=Modulus.zero(), f_modulus=replace(modulus, amplitude=2.0 * amp),
            sobolev_params=sobolev, c0=1.0 - amp, preset=preset,
            params={"n": n, "modulus": (modulus.kind, modulus.param),
                    "amplitude": amp, "angular_mode": mode})

    else:
        raise FieldValidationError(f"unknown preset {preset!r}")

    if params:
        raise FieldValidationError(f"unused parameters for preset {preset!r}: {sorted(params)}")
    validate_field(fld)
    return fld


# ---------------------------------------------------------------------------
# normalization at a base point


@dataclass
class Normalization:
    """Change of variables making A(x0) = I and f(x0) = 1."""

    x0: np.ndarray
    L: np.ndarray
    L_inverse: np.ndarray
    A0: np.ndarray
    f0: float


def _sym_sqrt(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Principal square root and inverse root by symmetric eigendecomposition."""
    vals, vecs = np.linalg.eigh(0.5 * (mat + mat.T))
    if vals.min() <= 0.0:
        raise ValueError(f"matrix not positive definite: eigenvalues {vals}")
    vals = np.clip(vals, EIG_CLAMP, None)
    root = (vecs * np.sqrt(vals)) @ vecs.T
    inv_root = (vecs / np.sqrt(vals)) @ vecs.T
    return root, inv_root


def normalize_at(fld: CoefficientField, x0) -> tuple[Normalization, CoefficientField]:
    """Normalize the field at x0 via L = f(x0)^(-1/2) A(x0)^(1/2).

    The returned field evaluates the transformed data
    A~(y) = A0^(-1/2) A(x0 + L y) A0^(-1/2) and f~(y) = f(x0 + L y)/f(x0),
    so A~(0) = I and f~(0) = 1.
    """
    x0 = np.asarray(x0, dtype=float)
    A0 = fld.A_at(x0[None, :])[0]
    f0 = float(fld.f_at(x0[None, :])[0])
    if f0 < fld.c0 - 1e-12:
        raise ValueError(f"f(x0) = {f0:.6f} below the admissible floor {fld.c0}")
    root, inv_root = _sym_sqrt(A0)
    L = root / math.sqrt(f0)
    L_inv = inv_root * math.sqrt(f0)
    norm = Normalization(x0=x0, L=L, L_inverse=L_inv, A0=A0, f0=f0)

    def A_t(pts, _f=fld, _x0=x0, _L=L, _ir=inv_root):
        phys = _x0 + pts @ _L.T
        a = _f.A_at(phys)
        return np.einsum("ij,kjl,lm->kim", _ir, a, _ir)

    def f_t(pts, _f=fld, _x0=x0, _L=L, _f0=f0):
        return _f.f_at(_x0 + pts @ _L.T) / _f0

    tfld = CoefficientField(
        n=fld.n, A=A_t, f=f_t, lam=fld.lam ** 2,
        A_modulus=fld.A_modulus, f_modulus=fld.f_modulus,
        sobolev_params=fld.sobolev_params, c0=fld.c0 / f0,
        preset=fld.preset + "@normalized", params=dict(fld.params),
        a_seminorm=fld.a_seminorm)
    return norm, tfld


# ---------------------------------------------------------------------------
# the integrability exponent Theta


def theta_exponent(s: float, p: float, n: int, t0: float) -> float:
    """Exponent Theta(s, p, n, t0) making r^(-n/Theta) integrable near 0.

    Theta = p when p > n, otherwise n p / (n - (s - t0) p) with t0 restricted
    to ((n - s p)/(p (n-1)), s + 1 - n/p); the upper bound is exactly the
    requirement Theta > n.  Inputs outside the admissible range are rejected
    with the violated inequality named.
    """
    if p <= 1.0:
        raise ValueError(f"rejected: p = {p} must exceed 1")
    if s <= 1.0 / p:
        raise ValueError(f"rejected: s = {s} violates s > 1/p = {1.0 / p:.6f}")
    p_floor = min(n * n / (n * (1.0 + s) - 1.0), float(n))
    if p <= p_floor:
        raise ValueError(
            f"rejected: p = {p} violates p > min(n^2/(n(1+s)-1), n) = {p_floor:.6f}")
    if p > n:
        return float(p)
    lower = (n - s * p) / (p * (n - 1.0))
    upper = s + 1.0 - n / p
    if not lower < t0 < upper:
        raise ValueError(
            f"rejected: t0 = {t0} must lie in ({lower:.6f}, {upper:.6f}) "
            "(upper bound enforces Theta > n)")
    theta = n * p / (n - (s - t0) * p)
    assert theta > n
    return float(theta)
