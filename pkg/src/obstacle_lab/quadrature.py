"""Ball and sphere quadrature plus Cartesian-grid interpolation.

Every energy in this package is an integral over a ball B_r(x0) or a sphere
dB_r(x0) of quantities built from a solution u and coefficient data (A, f).
The rules are deliberately plain tensor products:

  2D:  Gauss-Legendre nodes in radius x uniform trapezoid nodes in angle
       (uniform nodes are spectrally accurate for periodic integrands);
  3D:  Gauss-Legendre in radius x Gauss latitude x uniform longitude.

Solutions enter through a tiny evaluator protocol, ``value(points)`` and
``gradient(points)``, so closed-form model solutions and grid-interpolated
PSOR solutions share one code path.  Grid functions use bilinear/trilinear
interpolation with gradients from central differences at the nodes.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import RegularGridInterpolator

DEFAULT_RADIAL = 48
DEFAULT_ANGULAR = 256
DEFAULT_LAT = 64
DEFAULT_LON = 128

_GAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(m: int) -> tuple[np.ndarray, np.ndarray]:
    if m not in _GAUSS_CACHE:
        _GAUSS_CACHE[m] = leggauss(m)
    return _GAUSS_CACHE[m]


def radial_rule(r: float, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on the interval (0, r)."""
    x, w = _gauss(m)
    return 0.5 * r * (x + 1.0), 0.5 * r * w


def unit_sphere_rule(n: int, n_angular: int = DEFAULT_ANGULAR,
                     n_lat: int = DEFAULT_LAT, n_lon: int = DEFAULT_LON):
    """Directions and weights integrating over the unit sphere S^(n-1).

    Weights sum to 2*pi (n=2) or 4*pi (n=3).
    """
    if n == 2:
        theta = 2.0 * np.pi * np.arange(n_angular) / n_angular
        dirs = np.column_stack([np.cos(theta), np.sin(theta)])
        w = np.full(n_angular, 2.0 * np.pi / n_angular)
        return dirs, w
    if n == 3:
        # Gauss nodes in cos(latitude) avoid pole crowding.
        mu, wmu = _gauss(n_lat)
        phi = 2.0 * np.pi * np.arange(n_lon) / n_lon
        mu_g, phi_g = np.meshgrid(mu, phi, indexing="ij")
        s = np.sqrt(1.0 - mu_g ** 2)
        dirs = np.column_stack([(s * np.cos(phi_g)).ravel(),
                                (s * np.sin(phi_g)).ravel(),
                                mu_g.ravel()])
        w = np.repeat(wmu, n_lon) * (2.0 * np.pi / n_lon)
        return dirs, w
    raise ValueError(f"dimension must be 2 or 3, got {n}")


def sphere_rule(center, r: float, **kw):
    """Points and weights for the surface integral over dB_r(center)."""
    center = np.asarray(center, dtype=float)
    dirs, w = unit_sphere_rule(center.size, **kw)
    pts = center + r * dirs
    return pts, w * r ** (center.size - 1)


def ball_rule(center, r: float, n_radial: int = DEFAULT_RADIAL, **kw):
    """Points and weights for the volume integral over B_r(center).

    The radial Jacobian rho^(n-1) is folded into the weights.
    """
    center = np.asarray(center, dtype=float)
    n = center.size
    rho, wr = radial_rule(r, n_radial)
    dirs, wd = unit_sphere_rule(n, **kw)
    pts = (center + rho[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    w = (wr[:, None] * rho[:, None] ** (n - 1) * wd[None, :]).ravel()
    return pts, w


class GridFunction:
    """Function sampled on a uniform tensor grid.

    ``value`` interpolates multilinearly; ``gradient`` interpolates the
    nodal central-difference gradient (second order in the interior,
    one-sided at the box faces).
    """

    def __init__(self, axes, values: np.ndarray):
        self.axes = tuple(np.asarray(a, dtype=float) for a in axes)
        self.values = np.asarray(values, dtype=float)
        self._interp = RegularGridInterpolator(
            self.axes, self.values, method="linear",
            bounds_error=False, fill_value=None)
        grads = np.gradient(self.values, *self.axes, edge_order=2)
        if self.values.ndim == 1:
            grads = [grads]
        self._grad = [RegularGridInterpolator(
            self.axes, g, method="linear", bounds_error=False, fill_value=None)
            for g in grads]

    def value(self, pts) -> np.ndarray:
        return self._interp(np.asarray(pts, dtype=float))

    def gradient(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.stack([g(pts) for g in self._grad], axis=-1)


class TransformedFunction:
    """u composed with the affine map y -> x0 + L y (chain-rule gradient)."""

    def __init__(self, base, x0, L):
        self.base = base
        self.x0 = np.asarray(x0, dtype=float)
        self.L = np.asarray(L, dtype=float)

    def _phys(self, pts):
        return self.x0 + np.asarray(pts, dtype=float) @ self.L.T

    def value(self, pts) -> np.ndarray:
        return self.base.value(self._phys(pts))

    def gradient(self, pts) -> np.ndarray:
        return self.base.gradient(self._phys(pts)) @ self.L


class RescaledFunction:
    """The parabolic rescaling x -> u(x0 + r L x) / r^2 around x0."""

    def __init__(self, base, x0, r: float, L=None):
        self.base = base
        self.x0 = np.asarray(x0, dtype=float)
        self.r = float(r)
        self.L = np.eye(self.x0.size) if L is None else np.asarray(L, dtype=float)

    def _phys(self, pts):
        return self.x0 + self.r * (np.asarray(pts, dtype=float) @ self.L.T)

    def value(self, pts) -> np.ndarray:
        return self.base.value(self._phys(pts)) / self.r ** 2

    def gradient(self, pts) -> np.ndarray:
        return (self.base.gradient(self._phys(pts)) @ self.L) / self.r
