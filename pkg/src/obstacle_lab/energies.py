"""Monotonicity energies: E(r), H(r), Phi(r), Psi, and the adjusted variants.

For a solution u with data (A, f) normalized at the center (A(x0) = I,
f(x0) = 1, x0 mapped to the origin) define

    E(r)   = int_{B_r} <A grad u, grad u> + 2 f u dx,
    H(r)   = int_{dB_r} mu u^2 dH^{n-1},    mu = <A nu, nu>, nu = x/|x|,
    Phi(r) = r^-(n+2) E(r) - 2 r^-(n+3) H(r).

Phi is constant in r on 2-homogeneous global solutions and nondecreasing in
the classical A == I, f == 1 regime.  For Dini data the quasi-monotone
quantity is

    Phi(r) e^(C3 r^(1-n/Theta))
        + C4 int_0^r (t^(-n/Theta) + omega(t)/t) e^(C3 t^(1-n/Theta)) dt,

whose derivative dominates the sphere integral of
(2/r^(n+2)) mu (<mu^-1 A nu, grad u> - 2u/r)^2.  The constants C3, C4 (and
C5 for the singular-point functional below) depend on Sobolev norms the
synthetic fields do not expose, so they are calibrated: smallest values on a
logarithmic grid that make the quantity nondecreasing within slack.

At singular centers the companion functional is the boundary distance to a
fixed quadratic model v (2-homogeneous, positive, Laplacian 1):

    M(r) = int_{dB_1} (u_r - v)^2 dH^{n-1}
         + C5 (r^(1-n/Theta) + int_0^r omega/t + iterated double integral).

Quadrature: Gauss-Legendre radius x uniform angles (2D) or Gauss latitude x
uniform longitude (3D); u and grad u reach quadrature nodes through the
evaluator protocol (analytic models exactly, grid solutions by interpolation
of nodal values and central-difference gradients).  Correction integrals are
integrated in tau = -log t, where the integrands are smooth, with exact
closed forms for the t^(-n/Theta) part and the deep tail.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .coefficients import CoefficientField, Modulus
from .quadrature import (GridFunction, RescaledFunction, ball_rule,
                         radial_rule, sphere_rule, unit_sphere_rule)

MONOTONE_SLACK = 1e-3
C3_GRID = [0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0]
C_GRID = [0.0] + [10.0 ** k for k in range(-4, 7)]
MAX_CONSTANT = 1e6


class CalibrationError(RuntimeError):
    """No admissible constants restore monotonicity: bug or hypothesis violation."""


# ---------------------------------------------------------------------------
# domain guard


def _physical_check(solution, pts, margin_cells: float = 2.0):
    """Walk wrapper chain to the backing grid (if any) and check margins."""
    seen = 0
    while hasattr(solution, "base") and seen < 8:
        if hasattr(solution, "_phys"):
            pts = solution._phys(pts)
        solution = solution.base
        seen += 1
    if isinstance(solution, GridFunction):
        for d, ax in enumerate(solution.axes):
            h = ax[1] - ax[0]
            lo, hi = ax[0] + margin_cells * h, ax[-1] - margin_cells * h
            if pts[..., d].min() < lo or pts[..., d].max() > hi:
                raise ValueError(
                    "ball leaves the solution grid (margin 2h); reduce the radius")


# ---------------------------------------------------------------------------
# the three basic quantities


def ball_energy(solution, field: CoefficientField, x0, r: float,
                n_radial: int = 48, **kw) -> float:
    """E(r): volume energy of u on B_r(x0)."""
    x0 = np.asarray(x0, dtype=float)
    pts, w = ball_rule(x0, r, n_radial=n_radial, **kw)
    _physical_check(solution, pts)
    a = field.A_at(pts)
    g = solution.gradient(pts)
    integrand = np.einsum("kij,ki,kj->k", a, g, g) + 2.0 * field.f_at(pts) * solution.value(pts)
    return float(np.sum(w * integrand))


def sphere_energy(solution, field: CoefficientField, x0, r: float, **kw) -> float:
    """H(r): boundary energy int_{dB_r(x0)} mu u^2."""
    x0 = np.asarray(x0, dtype=float)
    pts, w = sphere_rule(x0, r, **kw)
    _physical_check(solution, pts)
    nu = (pts - x0) / r
    a = field.A_at(pts)
    mu = np.einsum("kij,ki,kj->k", a, nu, nu)
    return float(np.sum(w * mu * solution.value(pts) ** 2))


def weiss_phi(solution, field: CoefficientField, x0, r: float, **kw) -> float:
    """Phi(r) = r^-(n+2) E(r) - 2 r^-(n+3) H(r)."""
    n = field.n
    return (ball_energy(solution, field, x0, r, **kw) / r ** (n + 2)
            - 2.0 * sphere_energy(solution, field, x0, r, **kw) / r ** (n + 3))


def psi_energy(v, n: int = 2, r: float = 1.0, **kw) -> float:
    """Psi_v(r) with coefficients frozen to (I, 1); at r=1 for most uses."""
    pts, w = ball_rule(np.zeros(n), r, **kw)
    g = v.gradient(pts)
    vol = float(np.sum(w * (np.sum(g * g, axis=-1) + 2.0 * v.value(pts))))
    spts, sw = sphere_rule(np.zeros(n), r, **kw)
    sur = float(np.sum(sw * v.value(spts) ** 2))
    return vol / r ** (n + 2) - 2.0 * sur / r ** (n + 3)


# ---------------------------------------------------------------------------
# traces


def radius_schedule(r_max: float, count: int, r_min: float | None = None,
                    halvings_per_step: float = 0.5) -> np.ndarray:
    """Geometric radii r_max * 2^(-k q), increasing, optionally floored.

    The default step is a half halving (ratio 2^-1/2); calibration traces
    use a finer step so that 16 radii fit between 4h and r_max on
    desk-scale grids.
    """
    radii = r_max * 2.0 ** (-halvings_per_step * np.arange(count))
    if r_min is not None:
        radii = radii[radii >= r_min - 1e-15]
    return np.sort(radii)


@dataclass
class EnergyTrace:
    """Per-center record of the monotonicity quantities."""

    center: np.ndarray
    radii: np.ndarray
    E: np.ndarray
    H: np.ndarray
    phi: np.ndarray
    phi_adjusted: np.ndarray | None = None
    monneau: np.ndarray | None = None
    c3bar: float = 0.0
    c4: float = 0.0
    c5: float = 0.0
    theta_exp: float = math.inf
    modulus: Modulus | None = None

    def phi_extrapolated(self) -> float:
        """Phi(0+) by Richardson extrapolation on the three smallest radii.

        First-order elimination: least-squares fit of phi = phi0 + c r on
        the three smallest radii.  Quadratic elimination is noticeably less
        robust here because the smallest radii carry interpolation noise
        with no smooth r-expansion.
        """
        k = min(3, self.radii.size)
        coeff = np.polyfit(self.radii[:k], self.phi[:k], 1)
        return float(coeff[-1])


def compute_trace(solution, field: CoefficientField, x0, radii,
                  **kw) -> EnergyTrace:
    x0 = np.asarray(x0, dtype=float)
    radii = np.asarray(radii, dtype=float)
    E = np.array([ball_energy(solution, field, x0, r, **kw) for r in radii])
    H = np.array([sphere_energy(solution, field, x0, r, **kw) for r in radii])
    n = field.n
    phi = E / radii ** (n + 2) - 2.0 * H / radii ** (n + 3)
    return EnergyTrace(center=x0, radii=radii, E=E, H=H, phi=phi)


# ---------------------------------------------------------------------------
# the adjusted Weiss quantity


def _omega_correction(r: float, c3bar: float, kappa: float, m: Modulus,
                      n_nodes: int = 400, tau_max: float = 60.0) -> float:
    """int_0^r omega(t)/t e^(c3bar t^kappa) dt by Gauss nodes in tau = -log t."""
    if m.kind == "constant_zero" or r <= 0.0:
        return 0.0
    tau_r = -math.log(r)
    if tau_r >= tau_max:
        return m.dini_up_to(r)
    xs, ws = np.polynomial.legendre.leggauss(n_nodes)
    total = 0.0
    for lo, hi in ((tau_r, min(tau_r + 8.0, tau_max)),
                   (min(tau_r + 8.0, tau_max), tau_max)):
        if hi <= lo:
            continue
        tau = 0.5 * (hi - lo) * (xs + 1.0) + lo
        t = np.exp(-tau)
        total += 0.5 * (hi - lo) * float(np.sum(ws * m.omega(t) * np.exp(c3bar * t ** kappa)))
    total += m.dini_up_to(math.exp(-tau_max))   # deep tail, e-factor ~ 1 there
    return total


def adjustment_integral(r: float, c3bar: float, n: int, theta: float,
                        m: Modulus) -> float:
    """int_0^r (t^(-n/Theta) + omega(t)/t) e^(c3bar t^(1-n/Theta)) dt.

    The power part has the exact primitive (e^(c3bar s) - 1)/(kappa c3bar)
    under s = t^kappa, kappa = 1 - n/Theta.
    """
    kappa = 1.0 - n / theta
    if kappa <= 0.0:
        raise ValueError("Theta must exceed n")
    s = r ** kappa
    if c3bar == 0.0:
        power = s / kappa
    else:
        power = (math.exp(c3bar * s) - 1.0) / (kappa * c3bar)
    return power + _omega_correction(r, c3bar, kappa, m)


def adjusted_weiss(trace: EnergyTrace, theta: float, m: Modulus,
                   c3bar: float, c4: float) -> np.ndarray:
    """The quasi-monotone quantity per radius of the trace."""
    if theta <= trace.center.size:
        raise ValueError("Theta must exceed the dimension")
    if not np.all(np.diff(trace.radii) > 0.0):
        raise ValueError("radii must be sorted increasing")
    n = trace.center.size
    kappa = 1.0 - n / theta
    out = np.empty_like(trace.radii)
    for k, r in enumerate(trace.radii):
        out[k] = trace.phi[k] * math.exp(c3bar * r ** kappa) + \
            c4 * adjustment_integral(r, c3bar, n, theta, m)
    return out


def _min_forward_difference(values: np.ndarray) -> float:
    return float(np.min(np.diff(values))) if values.size > 1 else 0.0


def calibrate_constants(trace: EnergyTrace, theta: float, m: Modulus,
                        slack: float = MONOTONE_SLACK,
                        rhs_raw: np.ndarray | None = None) -> tuple[float, float]:
    """Smallest (C3bar, C4) on a log grid making the adjusted quantity
    nondecreasing within slack.

    Candidates are ordered by max(C3bar, C4), then by sum, so the classical
    case returns (0, 0).  When the unweighted sphere terms ``rhs_raw`` of
    the derivative inequality are supplied, the central-difference
    derivative must additionally dominate them (with the candidate's
    exponential weight applied) within the same slack.  Raises
    CalibrationError when no pair up to 1e6 works.
    """
    if trace.radii.size < 16:
        raise ValueError("calibration needs at least 16 radii")
    n = trace.center.size
    kappa = 1.0 - n / theta
    pairs = sorted(((c3, c4) for c3 in C3_GRID for c4 in C_GRID
                    if max(c3, c4) <= MAX_CONSTANT),
                   key=lambda p: (max(p), p[0] + p[1]))
    for c3, c4 in pairs:
        adj = adjusted_weiss(trace, theta, m, c3, c4)
        if _min_forward_difference(adj) < -slack:
            continue
        if rhs_raw is not None:
            rhs = np.exp(c3 * trace.radii ** kappa) * rhs_raw
            if _derivative_margins(trace.radii, adj, rhs).min() < -slack:
                continue
        return c3, c4
    raise CalibrationError(
        "no constants up to 1e6 make the adjusted quantity monotone; "
        "check the field hypotheses")


def derivative_bound_raw(solution, field: CoefficientField, x0, r: float,
                         **kw) -> float:
    """Unweighted sphere term of the derivative inequality:

        (2 / r^(n+2)) int_{dB_r} mu (<mu^-1 A nu, grad u> - 2 u/r)^2 dH^{n-1}.
    """
    x0 = np.asarray(x0, dtype=float)
    n = field.n
    pts, w = sphere_rule(x0, r, **kw)
    _physical_check(solution, pts)
    nu = (pts - x0) / r
    a = field.A_at(pts)
    mu = np.einsum("kij,ki,kj->k", a, nu, nu)
    anu = np.einsum("kij,kj->ki", a, nu)
    g = solution.gradient(pts)
    bracket = np.einsum("ki,ki->k", anu, g) / mu - 2.0 * solution.value(pts) / r
    integral = float(np.sum(w * mu * bracket ** 2))
    return 2.0 * integral / r ** (n + 2)


def _derivative_margins(radii: np.ndarray, adj: np.ndarray,
                        rhs: np.ndarray) -> np.ndarray:
    """Central-difference derivative minus rhs at the interior radii."""
    deriv = (adj[2:] - adj[:-2]) / (radii[2:] - radii[:-2])
    return deriv - rhs[1:-1]


def weiss_derivative_bound_check(solution, field: CoefficientField, x0, radii,
                                 theta: float, m: Modulus,
                                 c3bar: float, c4: float,
                                 trace: EnergyTrace | None = None,
                                 rhs_raw: np.ndarray | None = None,
                                 **kw) -> list[dict]:
    """Compare the finite-difference derivative of the adjusted quantity with
    the sphere quadrature it must dominate; report the margin per radius.

    Derivatives are central differences at interior radii of the schedule.
    On homogeneous model solutions both sides vanish (Euler's relation).
    """
    radii = np.asarray(radii, dtype=float)
    if trace is None:
        trace = compute_trace(solution, field, x0, radii, **kw)
    adj = adjusted_weiss(trace, theta, m, c3bar, c4)
    if rhs_raw is None:
        rhs_raw = np.array([derivative_bound_raw(solution, field, x0, r, **kw)
                            for r in radii])
    kappa = 1.0 - field.n / theta
    rhs = np.exp(c3bar * radii ** kappa) * rhs_raw
    margins = _derivative_margins(radii, adj, rhs)
    report = []
    for k in range(1, radii.size - 1):
        deriv = margins[k - 1] + rhs[k]
        report.append({"r": float(radii[k]), "derivative": float(deriv),
                       "rhs": float(rhs[k]), "margin": float(margins[k - 1])})
    return report


# ---------------------------------------------------------------------------
# the singular-point functional


def monneau_distance(solution, v, r: float, x0=None, L=None, n: int = 2,
                     **kw) -> float:
    """int_{dB_1} (u_r - v)^2 dH^{n-1} for the rescaling at radius r."""
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    u_r = RescaledFunction(solution, x0, r, L)
    dirs, w = unit_sphere_rule(n, **kw)
    _physical_check(u_r, dirs)
    diff = u_r.value(dirs) - v.value(dirs)
    return float(np.sum(w * diff ** 2))


def monneau_correction(r: float, theta: float, n: int, m: Modulus) -> float:
    """r^(1-n/Theta) + int_0^r omega/t + the iterated double Dini integral."""
    return r ** (1.0 - n / theta) + m.dini_up_to(r) + m.double_dini_up_to(r)


def monneau(solution, field: CoefficientField, x0, v, radii, c5: float,
            theta: float, m: Modulus, L=None, require_singular: bool = True,
            **kw) -> tuple[np.ndarray, np.ndarray]:
    """Singular-point quasi-monotone sequence M(r) + C5 * correction(r).

    v must be a quadratic model (2-homogeneous, positive semidefinite,
    Laplacian one).  The center must blow up to a quadratic profile; regular
    centers are rejected.  Returns (M values, adjusted sequence).
    """
    if getattr(v, "kind", None) != "quadratic":
        raise ValueError("v must be a quadratic model solution")
    x0 = np.asarray(x0, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if require_singular:
        from .blowup import classify, rescale
        fit = classify(rescale(solution, x0, float(radii[-1]), L=L))
        if fit.kind != "B":
            raise ValueError("center classifies as regular; the singular-point "
                             "functional does not apply")
    mvals = np.array([monneau_distance(solution, v, r, x0=x0, L=L, n=field.n, **kw)
                      for r in radii])
    corr = np.array([monneau_correction(r, theta, field.n, m) for r in radii])
    return mvals, mvals + c5 * corr


def calibrate_c5(mvals: np.ndarray, corr: np.ndarray,
                 slack: float = MONOTONE_SLACK) -> float:
    """Smallest C5 on the log grid making M + C5 corr nondecreasing."""
    for c5 in C_GRID:
        if _min_forward_difference(mvals + c5 * corr) >= -slack:
            return c5
    raise CalibrationError("no C5 up to 1e6 restores monotonicity")


# ---------------------------------------------------------------------------
# serialization


def write_trace(trace: EnergyTrace, csv_path, meta: dict | None = None,
                float_fmt: str = "%.17g") -> None:
    """CSV r,E,H,phi,phi_adjusted,monneau(,config_hash) + JSON sidecar."""
    meta = dict(meta or {})
    config_hash = meta.get("config_hash", "")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r", "E", "H", "phi", "phi_adjusted", "monneau",
                         "config_hash"])
        for k, r in enumerate(trace.radii):
            adj = "" if trace.phi_adjusted is None else float_fmt % trace.phi_adjusted[k]
            mon = "" if trace.monneau is None else float_fmt % trace.monneau[k]
            writer.writerow([float_fmt % r, float_fmt % trace.E[k],
                             float_fmt % trace.H[k], float_fmt % trace.phi[k],
                             adj, mon, config_hash])
    sidecar = {
        "center": [float(c) for c in trace.center],
        "constants": {"c3bar": trace.c3bar, "c4": trace.c4, "c5": trace.c5},
        "theta_exp": trace.theta_exp,
        "modulus": None if trace.modulus is None else
            {"kind": trace.modulus.kind, "param": trace.modulus.param,
             "a_exponent": trace.modulus.a_exponent,
             "amplitude": trace.modulus.amplitude},
        "slack": MONOTONE_SLACK,
        "schema_version": 1,
    }
    sidecar.update(meta)
    with open(str(csv_path).rsplit(".", 1)[0] + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
