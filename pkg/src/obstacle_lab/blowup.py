"""Rescalings around free-boundary points, blow-up classification, decay.

At a free-boundary point x0 the parabolic rescalings

    u_{x0,r}(x) = u(x0 + r x) / r^2        (optionally through L(x0))

stay bounded with bounded second differences, are nondegenerate
(sup_{dB_r} u >= theta r^2 for some theta > 0), and converge as r -> 0 to a
2-homogeneous global profile of exactly one of two shapes:

    type A (regular):   w(x) = 1/2 (<x, nu> v 0)^2,  |nu| = 1,
    type B (singular):  w(x) = <B x, x>,  B symmetric PSD, Tr B = 1/2.

``classify`` fits both models in L^2 over the unit ball (minus a small core
where both models vanish quadratically and interpolation noise dominates)
and keeps the smaller residual.  ``uniqueness_decay`` measures the boundary
L^1 distance d(r) between the rescalings and the fitted profile, which at
regular points is bounded by C7 rho(r) with the dyadic tail function

    rho(t) = sum_{j>=h} j^(-a/2)   for t in [2^-h, 2^-h+1),  a > 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .lcp import ACTIVE_FACTOR, GridSolution
from .quadrature import RescaledFunction, unit_sphere_rule

FIT_CORE_RADIUS = 0.1       # exclude |x| < 0.1 from model fits
UNCLASSIFIED_FACTOR = 0.2   # relative residual beyond which no model fits
KER_EIGENVALUE_FACTOR = 1e-3


@dataclass
class Rescaling:
    """u_{x0,r} sampled on a reference grid over the unit ball."""

    x0: np.ndarray
    r: float
    values: np.ndarray
    axes: tuple[np.ndarray, ...]
    evaluator: RescaledFunction

    @property
    def n(self) -> int:
        return self.x0.size


@dataclass
class BlowupFit:
    """Classified blow-up profile with fit diagnostics."""

    kind: str                    # "A" or "B", by smaller residual
    nu: np.ndarray | None
    B: np.ndarray | None
    residual_A: float
    residual_B: float
    stratum_dim: int
    classified: bool
    per_radius: list | None = None

    def model(self):
        """Evaluator for the fitted profile."""
        from . import oracles
        if self.kind == "A":
            return oracles.halfspace(self.nu, self.nu.size)
        return oracles.quadratic(self.B)


def rescale(solution, x0, r: float, L=None, ref_nodes: int = 65) -> Rescaling:
    """Sample u(x0 + r L x)/r^2 on a [-1, 1]^n reference grid.

    Exact on closed-form inputs; grid solutions are interpolated.  The ball
    B_r(x0) (image of the unit ball) must stay inside the solution's domain.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    ev = RescaledFunction(solution, x0, r, L)
    ax = np.linspace(-1.0, 1.0, ref_nodes)
    axes = (ax,) * n
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    from .energies import _physical_check
    _physical_check(ev, pts[np.linalg.norm(pts, axis=1) <= 1.0])
    values = ev.value(pts).reshape((ref_nodes,) * n)
    return Rescaling(x0=x0, r=float(r), values=values, axes=axes, evaluator=ev)


# ---------------------------------------------------------------------------
# free-boundary machinery


def extract_crossings(solution: GridSolution) -> tuple[np.ndarray, np.ndarray]:
    """Active-mask transitions: (crossing points, adjacent active nodes).

    A node is boundary-adjacent when the active mask changes across one of
    its edges; the crossing position is the point where linearly
    interpolated u reaches the activation threshold.  The paired active
    node is returned as well since its nodal value and gradient are the
    cleanest data for growth-based refinements.
    """
    grid = solution.grid
    u, active = solution.u, solution.active_mask
    thr = ACTIVE_FACTOR * solution.tol
    axes = grid.axes
    points, anchors = [], []
    for d in range(grid.n):
        base = tuple(slice(0, -1) if k == d else slice(None) for k in range(grid.n))
        shifted = tuple(slice(1, None) if k == d else slice(None) for k in range(grid.n))
        crossing = active[base] != active[shifted]
        idx = np.argwhere(crossing)
        if idx.size == 0:
            continue
        u1 = u[base][crossing]
        u2 = u[shifted][crossing]
        t = np.clip((thr - u1) / np.where(u2 != u1, u2 - u1, 1.0), 0.0, 1.0)
        pts = np.stack([axes[k][idx[:, k]] for k in range(grid.n)], axis=-1)
        anchor = pts.copy()
        active_is_base = active[base][crossing]
        anchor[:, d] += np.where(active_is_base, 0.0, grid.h)
        pts[:, d] += t * grid.h
        points.append(pts)
        anchors.append(anchor)
    if not points:
        return np.zeros((0, grid.n)), np.zeros((0, grid.n))
    return np.vstack(points), np.vstack(anchors)


def extract_free_boundary(solution: GridSolution) -> np.ndarray:
    """Subgrid free-boundary points from active-mask transitions."""
    return extract_crossings(solution)[0]


def growth_ratio(solution, x0, radii, n_dirs: int = 256, n_sub: int = 24) -> np.ndarray:
    """sup_{B_r(x0)} u / r^2 per radius (quadratic growth diagnostic)."""
    x0 = np.asarray(x0, dtype=float)
    dirs, _ = unit_sphere_rule(x0.size, n_angular=n_dirs)
    radii = np.asarray(radii, dtype=float)
    out = np.empty_like(radii)
    sup_so_far = 0.0
    rho_prev = 0.0
    for k, r in enumerate(np.sort(radii)):
        for rho in np.linspace(rho_prev + (r - rho_prev) / n_sub, r, n_sub):
            sup_so_far = max(sup_so_far, float(np.max(solution.value(x0 + rho * dirs))))
        rho_prev = r
        out[k] = sup_so_far / r ** 2
    return out


def nondegeneracy(solution, x0, radii, n_dirs: int = 512) -> float:
    """min over r of sup_{dB_r(x0)} u / r^2.

    Strictly positive at genuine free-boundary points, ~0 at centers buried
    in the contact set.
    """
    x0 = np.asarray(x0, dtype=float)
    dirs, _ = unit_sphere_rule(x0.size, n_angular=n_dirs)
    vals = []
    for r in np.asarray(radii, dtype=float):
        vals.append(float(np.max(solution.value(x0 + r * dirs))) / r ** 2)
    return float(min(vals))


# ---------------------------------------------------------------------------
# classification


def _fit_nodes(rescaling: Rescaling) -> tuple[np.ndarray, np.ndarray, float]:
    mesh = np.meshgrid(*rescaling.axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    rr = np.linalg.norm(pts, axis=1)
    mask = (rr >= FIT_CORE_RADIUS) & (rr <= 1.0)
    h = rescaling.axes[0][1] - rescaling.axes[0][0]
    return pts[mask], rescaling.values.ravel()[mask], h ** rescaling.n


def _halfspace_model(pts: np.ndarray, nu: np.ndarray) -> np.ndarray:
    return 0.5 * np.clip(pts @ nu, 0.0, None) ** 2


def _fit_type_a(pts, vals, cell) -> tuple[np.ndarray, float]:
    n = pts.shape[1]
    if n == 2:
        coarse = np.linspace(0.0, 2.0 * np.pi, 720, endpoint=False)
        dirs = np.column_stack([np.cos(coarse), np.sin(coarse)])
        proj = np.clip(pts @ dirs.T, 0.0, None)
        res = np.sum((vals[:, None] - 0.5 * proj ** 2) ** 2, axis=0)
        best = coarse[int(np.argmin(res))]

        def objective(t):
            nu = np.array([math.cos(t), math.sin(t)])
            return float(np.sum((vals - _halfspace_model(pts, nu)) ** 2))

        opt = minimize_scalar(objective, bounds=(best - 0.05, best + 0.05),
                              method="bounded",
                              options={"xatol": 1e-10})
        t = float(opt.x)
        nu = np.array([math.cos(t), math.sin(t)])
    else:
        golden = math.pi * (3.0 - math.sqrt(5.0))
        k = np.arange(2000)
        z = 1.0 - 2.0 * (k + 0.5) / 2000
        rxy = np.sqrt(1.0 - z ** 2)
        dirs = np.column_stack([rxy * np.cos(golden * k), rxy * np.sin(golden * k), z])
        proj = np.clip(pts @ dirs.T, 0.0, None)
        res = np.sum((vals[:, None] - 0.5 * proj ** 2) ** 2, axis=0)
        d0 = dirs[int(np.argmin(res))]
        th0, ph0 = math.acos(d0[2]), math.atan2(d0[1], d0[0])

        def objective(x):
            th, ph = x
            nu = np.array([math.sin(th) * math.cos(ph),
                           math.sin(th) * math.sin(ph), math.cos(th)])
            return float(np.sum((vals - _halfspace_model(pts, nu)) ** 2))

        opt = minimize(objective, np.array([th0, ph0]), method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-18})
        th, ph = opt.x
        nu = np.array([math.sin(th) * math.cos(ph),
                       math.sin(th) * math.sin(ph), math.cos(th)])
    resid = math.sqrt(float(np.sum((vals - _halfspace_model(pts, nu)) ** 2)) * cell)
    return nu, resid


def _quadratic_design(pts: np.ndarray) -> tuple[np.ndarray, list[tuple[int, int]]]:
    n = pts.shape[1]
    cols, pairs = [], []
    for i in range(n):
        for j in range(i, n):
            pairs.append((i, j))
            cols.append(pts[:, i] ** 2 if i == j else 2.0 * pts[:, i] * pts[:, j])
    return np.column_stack(cols), pairs


def _fit_type_b(pts, vals, cell) -> tuple[np.ndarray, float, int]:
    n = pts.shape[1]
    design, pairs = _quadratic_design(pts)
    coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
    B = np.zeros((n, n))
    for c, (i, j) in zip(coef, pairs):
        B[i, j] = B[j, i] = c
    # project to the admissible set: PSD by eigenvalue clamping, then trace
    # rescaled to 1/2
    w, V = np.linalg.eigh(B)
    w = np.clip(w, 0.0, None)
    tr = float(np.sum(w))
    if tr <= 0.0:
        B = np.eye(n) / (2.0 * n)
        w = np.full(n, 0.5 / n)
    else:
        w = w * (0.5 / tr)
        B = (V * w) @ V.T
    model = np.einsum("ki,ij,kj->k", pts, B, pts)
    resid = math.sqrt(float(np.sum((vals - model) ** 2)) * cell)
    kernel = int(np.sum(np.sort(w) < KER_EIGENVALUE_FACTOR * 0.5))
    return B, resid, kernel


def classify(rescaling: Rescaling) -> BlowupFit:
    """Least-squares fit of both global models; smaller residual wins."""
    pts, vals, cell = _fit_nodes(rescaling)
    nu, res_a = _fit_type_a(pts, vals, cell)
    B, res_b, kernel = _fit_type_b(pts, vals, cell)
    norm = math.sqrt(float(np.sum(vals ** 2)) * cell)
    classified = min(res_a, res_b) <= UNCLASSIFIED_FACTOR * max(norm, 1e-300)
    if res_a <= res_b:
        return BlowupFit("A", nu, None, res_a, res_b, 0, classified)
    return BlowupFit("B", None, B, res_a, res_b, kernel, classified)


def classify_at(solution, x0, r_fit: float, L=None, ref_nodes: int = 65) -> BlowupFit:
    return classify(rescale(solution, x0, r_fit, L=L, ref_nodes=ref_nodes))


def stability_record(solution, x0, radii, L=None) -> list[dict]:
    """Classification per radius of the schedule (per-radius stability)."""
    rec = []
    for r in np.asarray(radii, dtype=float):
        fit = classify_at(solution, x0, float(r), L=L)
        rec.append({"r": float(r), "type": fit.kind,
                    "residual_A": fit.residual_A, "residual_B": fit.residual_B})
    return rec


# ---------------------------------------------------------------------------
# uniqueness diagnostics


def uniqueness_decay(solution, x0, fit: BlowupFit, radii, L=None,
                     n_dirs: int = 512) -> np.ndarray:
    """d(r) = int_{dB_1} |u_{L(x0),r} - w| dH^{n-1} against the fitted w."""
    x0 = np.asarray(x0, dtype=float)
    model = fit.model()
    dirs, w = unit_sphere_rule(x0.size, n_angular=n_dirs)
    out = []
    for r in np.asarray(radii, dtype=float):
        ev = RescaledFunction(solution, x0, float(r), L)
        out.append(float(np.sum(w * np.abs(ev.value(dirs) - model.value(dirs)))))
    return np.asarray(out)


def rho(t: float, a: float, partial_terms: int = 5000) -> float:
    """Dyadic tail sum rho(t) = sum_{j>=h} j^(-a/2), t in [2^-h, 2^-h+1).

    Evaluated as a partial sum plus the midpoint integral bound of the
    remainder, int_{N+1/2}^inf x^(-a/2) dx = (N+1/2)^(1-a/2)/(a/2-1);
    requires a > 2 so the tail vanishes as t -> 0.
    """
    if not 0.0 < t < 1.0:
        raise ValueError("t must lie in (0, 1)")
    if a <= 2.0:
        raise ValueError("rejected: a must exceed 2 for a vanishing tail")
    h = max(1, math.ceil(-math.log2(t)))
    s = 0.5 * a
    j = np.arange(h, h + partial_terms, dtype=float)
    partial = float(np.sum(j ** (-s)))
    ncut = h + partial_terms - 0.5
    return partial + ncut ** (1.0 - s) / (s - 1.0)


def decay_envelope(d: np.ndarray, radii, a: float) -> tuple[float, np.ndarray]:
    """Fit C7 = max d(r)/rho(r) and return (C7, C7 * rho(r))."""
    rr = np.asarray(radii, dtype=float)
    rho_vals = np.array([rho(float(r), a) for r in rr])
    c7 = float(np.max(np.asarray(d) / rho_vals))
    return c7, c7 * rho_vals


def homogeneity_residual(rescaling: Rescaling) -> float:
    """L^2 norm over 0.25 <= |x| <= 1 of u_r(x) - |x|^2 u_r(x/|x|).

    Zero for exactly 2-homogeneous profiles; decreasing in r at
    free-boundary centers.
    """
    mesh = np.meshgrid(*rescaling.axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    rr = np.linalg.norm(pts, axis=1)
    mask = (rr >= 0.25) & (rr <= 1.0)
    pts, rr = pts[mask], rr[mask]
    ev = rescaling.evaluator
    diff = ev.value(pts) - rr ** 2 * ev.value(pts / rr[:, None])
    h = rescaling.axes[0][1] - rescaling.axes[0][0]
    return math.sqrt(float(np.sum(diff ** 2)) * h ** rescaling.n)


def uniform_hessian_bound(solution, x0, radii, L=None, ref_nodes: int = 65) -> tuple[float, np.ndarray]:
    """max over r of the sup norm of second differences of u_{x0,r} on B_1.

    Returns (overall max, per-radius values); boundedness across the radius
    schedule is the discrete counterpart of the uniform W^{2,p} estimate.
    """
    per = []
    for r in np.asarray(radii, dtype=float):
        resc = rescale(solution, x0, float(r), L=L, ref_nodes=ref_nodes)
        v = resc.values
        h = resc.axes[0][1] - resc.axes[0][0]
        n = resc.n
        mesh = np.meshgrid(*resc.axes, indexing="ij")
        rr = np.linalg.norm(np.stack(mesh, axis=-1), axis=-1)
        worst = 0.0
        inner = (slice(1, -1),) * n
        ok = rr[inner] <= 1.0 - 1.5 * h
        for d in range(n):
            up = tuple(slice(2, None) if k == d else slice(1, -1) for k in range(n))
            dn = tuple(slice(0, -2) if k == d else slice(1, -1) for k in range(n))
            dd = (v[up] - 2.0 * v[inner] + v[dn]) / h ** 2
            worst = max(worst, float(np.max(np.abs(dd[ok]))))
        for d in range(n):
            for e in range(d + 1, n):
                pp = tuple(slice(2, None) if k in (d, e) else slice(1, -1) for k in range(n))
                mm = tuple(slice(0, -2) if k in (d, e) else slice(1, -1) for k in range(n))
                pm = tuple(slice(2, None) if k == d else (slice(0, -2) if k == e else slice(1, -1))
                           for k in range(n))
                mp = tuple(slice(0, -2) if k == d else (slice(2, None) if k == e else slice(1, -1))
                           for k in range(n))
                dd = (v[pp] - v[pm] - v[mp] + v[mm]) / (4.0 * h ** 2)
                worst = max(worst, float(np.max(np.abs(dd[ok]))))
        per.append(worst)
    per = np.asarray(per)
    return float(per.max()), per


def normal_stability(points: np.ndarray, normals: np.ndarray) -> float:
    """Max angular deviation of fitted normals between neighboring
    free-boundary points (qualitative regularity diagnostic)."""
    if len(points) < 2:
        return 0.0
    center = points.mean(axis=0)
    order = np.argsort(np.arctan2(points[:, 1] - center[1], points[:, 0] - center[0]))
    nus = normals[order]
    dots = np.clip(np.sum(nus * np.roll(nus, -1, axis=0), axis=1), -1.0, 1.0)
    return float(np.max(np.degrees(np.arccos(dots))))
