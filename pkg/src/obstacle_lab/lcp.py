"""Discrete obstacle problem: projected SOR on a divergence-form operator.

The continuous problem minimizes int <A grad v, grad v> + 2 f v over v >= 0
with fixed nonnegative Dirichlet data, equivalently the complementarity
system

    u >= 0,   f - div(A grad u) >= 0,   u (f - div(A grad u)) = 0.

On a uniform grid the operator L_h u ~ div(A grad u) comes from flux
differencing with A averaged arithmetically onto half edges; for A == I it
is the standard 5-point (2D) / 7-point (3D) Laplacian.  Mixed entries a_de
use the symmetric diagonal-pair stencil, so the assembled matrix is exactly
symmetric and the projected SOR sweeps of Cryer apply: each sweep with
relaxation factor in (0, 2) decreases the discrete energy monotonically and
the iterates converge to the unique solution of the LCP

    u >= 0,   K u + f >= 0,   u^T (K u + f) = 0,      K = -L_h.

Convergence is declared on the complementarity residual
max |min(u, f - L_h u)| over free nodes, which is the quantity the solution
invariants assert, rather than on the iterate delta.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .coefficients import CoefficientField
from .quadrature import GridFunction

ACTIVE_FACTOR = 10.0   # active set is u > ACTIVE_FACTOR * tol


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on the box [-half_width, half_width]^n."""

    n: int
    nodes: int
    half_width: float = 1.0

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ValueError("dimension must be 2 or 3")
        if self.nodes < 17:
            raise ValueError("need at least 17 nodes per axis")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / (self.nodes - 1)

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        ax = np.linspace(-self.half_width, self.half_width, self.nodes)
        return (ax,) * self.n

    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def boundary_mask(self) -> np.ndarray:
        shape = (self.nodes,) * self.n
        mask = np.zeros(shape, dtype=bool)
        for d in range(self.n):
            sl = [slice(None)] * self.n
            for end in (0, -1):
                sl[d] = end
                mask[tuple(sl)] = True
        return mask


@dataclass
class ObstacleProblem:
    """Grid, coefficient data and nonnegative Dirichlet values.

    ``dirichlet`` is a full-grid array; only its boundary-node entries are
    used.  An optional ``pinned`` mask marks extra nodes held at the
    Dirichlet values (used to carve non-box domains out of the grid).
    """

    grid: Grid
    field: CoefficientField
    dirichlet: np.ndarray
    pinned: np.ndarray | None = None

    def __post_init__(self):
        self.dirichlet = np.asarray(self.dirichlet, dtype=float)
        fixed = self.fixed_mask()
        if np.any(self.dirichlet[fixed] < 0.0):
            raise ValueError("Dirichlet data must be nonnegative")

    def fixed_mask(self) -> np.ndarray:
        mask = self.grid.boundary_mask()
        if self.pinned is not None:
            mask = mask | self.pinned
        return mask


class DivergenceOperator:
    """L_h u ~ div(A grad u) as symmetric edge families.

    Each family is (offset, weights, sign): an edge joins a base node to
    base + offset and contributes sign * w * (u[base+offset] - u[base]) to
    the row of the base node, and the negated difference to the other row.
    Row sums are zero by construction.
    """

    def __init__(self, grid: Grid, field: CoefficientField):
        self.grid = grid
        n, N, h = grid.n, grid.nodes, grid.h
        shape = (N,) * n
        A_nodes = field.A_at(grid.points()).reshape(shape + (n, n))
        self.families: list[tuple[tuple[int, ...], np.ndarray, float]] = []

        for d in range(n):
            a = A_nodes[..., d, d]
            off = tuple(1 if k == d else 0 for k in range(n))
            w = 0.5 * (a[self._base(off)] + a[self._shifted(off)]) / h ** 2
            self.families.append((off, w, 1.0))

        for d in range(n):
            for e in range(d + 1, n):
                a = A_nodes[..., d, e]
                if not np.any(np.abs(a) > 0.0):
                    continue
                for sgn_e, sgn in ((1, 1.0), (-1, -1.0)):
                    off = tuple(1 if k == d else (sgn_e if k == e else 0)
                                for k in range(n))
                    w = 0.5 * (a[self._base(off)] + a[self._shifted(off)])
                    self.families.append((off, w / (2.0 * h ** 2), sgn))

        self.diag = np.zeros(shape)
        for off, w, sgn in self.families:
            self.diag[self._base(off)] += sgn * w
            self.diag[self._shifted(off)] += sgn * w
        self.has_mixed = len(self.families) > n
        if np.any(self.diag[self._interior()] <= 0.0):
            raise ValueError("operator diagonal not positive; field too rough for the grid")

    def _base(self, off) -> tuple[slice, ...]:
        return tuple(slice(0, -1) if o == 1 else (slice(1, None) if o == -1 else slice(None))
                     for o in off)

    def _shifted(self, off) -> tuple[slice, ...]:
        return tuple(slice(1, None) if o == 1 else (slice(0, -1) if o == -1 else slice(None))
                     for o in off)

    def _interior(self) -> tuple[slice, ...]:
        return (slice(1, -1),) * self.grid.n

    def apply(self, u: np.ndarray) -> np.ndarray:
        """L_h u on the full grid (boundary rows are not meaningful)."""
        out = np.zeros_like(u)
        for off, w, sgn in self.families:
            diff = sgn * w * (u[self._shifted(off)] - u[self._base(off)])
            out[self._base(off)] += diff
            out[self._shifted(off)] -= diff
        return out

    def quadratic_energy(self, u: np.ndarray) -> float:
        """Midpoint-flux approximation of int <A grad u, grad u>.

        Axis families carry trapezoid weights in the tangential directions
        (their node count overcovers the box by half a cell per face);
        diagonal families are cell-based and already cover exactly.
        """
        n, N, h = self.grid.n, self.grid.nodes, self.grid.h
        total = 0.0
        for off, w, sgn in self.families:
            diff2 = (u[self._shifted(off)] - u[self._base(off)]) ** 2
            if sum(abs(o) for o in off) == 1:
                d = next(k for k, o in enumerate(off) if o != 0)
                tau = np.ones_like(w)
                for e in range(n):
                    if e == d:
                        continue
                    sl = [slice(None)] * n
                    for end in (0, -1):
                        sl[e] = end
                        tau[tuple(sl)] *= 0.5
                total += float(np.sum(tau * w * diff2))
            else:
                total += sgn * float(np.sum(w * diff2))
        return h ** n * total


def assemble_operator(grid: Grid, field: CoefficientField) -> DivergenceOperator:
    return DivergenceOperator(grid, field)


@dataclass
class GridSolution:
    """Solved u with active set, residual and iteration metadata."""

    grid: Grid
    u: np.ndarray
    active_mask: np.ndarray
    complementarity_residual: float
    iterations: int
    converged: bool
    tol: float
    energies: list = dc_field(default_factory=list)

    def function(self) -> GridFunction:
        return GridFunction(self.grid.axes, self.u)


def _trapezoid_weights(grid: Grid) -> np.ndarray:
    w = np.ones((grid.nodes,) * grid.n)
    for d in range(grid.n):
        sl = [slice(None)] * grid.n
        for end in (0, -1):
            sl[d] = end
            w[tuple(sl)] *= 0.5
    return w


def _auto_omega(grid: Grid) -> float:
    return min(2.0 / (1.0 + math.sin(math.pi / (grid.nodes - 1))), 1.97)


def solve(problem: ObstacleProblem, tol: float = 1e-10, max_iter: int = 100_000,
          omega: float | str = 1.8, project: bool = True,
          track_energy: bool = False, check_every: int = 8) -> GridSolution:
    """Projected SOR for the discrete obstacle problem.

    Stops when the complementarity residual max |min(u, f - L_h u)| over
    free nodes drops below tol; if max_iter is exhausted the best iterate is
    returned flagged non-converged.  Sweeps use red-black ordering (four
    colors when the operator has diagonal couplings) so each color update is
    an exact Gauss-Seidel step; the sweep order is fixed, hence the result
    is deterministic.  With ``project=False`` the same sweeps solve the
    unconstrained equation (used for comparison runs).
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    grid, fld = problem.grid, problem.field
    op = assemble_operator(grid, fld)
    shape = (grid.nodes,) * grid.n
    f_nodes = fld.f_at(grid.points()).reshape(shape)
    fixed = problem.fixed_mask()
    free = ~fixed

    u = np.where(fixed, np.clip(problem.dirichlet, 0.0, None) if project
                 else problem.dirichlet, 0.0)

    mesh = np.meshgrid(*[np.arange(grid.nodes)] * grid.n, indexing="ij")
    if op.has_mixed:
        colors = [(mesh[0] % 2) * 2 + (mesh[1] % 2) == c for c in range(4)]
    else:
        parity = sum(mesh) % 2
        colors = [parity == c for c in range(2)]
    color_masks = [c & free for c in colors]

    if omega == "auto":
        omega = _auto_omega(grid)
    omega = float(omega)
    if not 0.0 < omega < 2.0:
        raise ValueError("relaxation factor must lie in (0, 2)")

    energies: list[float] = []
    trap = _trapezoid_weights(grid) if track_energy else None

    def energy(v):
        return op.quadratic_energy(v) + 2.0 * grid.h ** grid.n * float(np.sum(trap * f_nodes * v))

    def residual(v):
        r = np.minimum(v, f_nodes - op.apply(v)) if project else f_nodes - op.apply(v)
        return float(np.max(np.abs(r[free]))) if np.any(free) else 0.0

    if track_energy:
        energies.append(energy(u))

    res = residual(u)
    sweeps = 0
    while res > tol and sweeps < max_iter:
        for mask in color_masks:
            delta = (op.apply(u) - f_nodes) / op.diag
            unew = u + omega * delta
            if project:
                unew = np.clip(unew, 0.0, None)
            u[mask] = unew[mask]
        sweeps += 1
        if track_energy:
            energies.append(energy(u))
        if sweeps % check_every == 0 or sweeps == max_iter:
            res = residual(u)
    res = residual(u)

    active = u > ACTIVE_FACTOR * tol
    return GridSolution(grid=grid, u=u, active_mask=active,
                        complementarity_residual=res, iterations=sweeps,
                        converged=res <= tol, tol=tol, energies=energies)


def energy_of(solution: GridSolution, problem: ObstacleProblem) -> float:
    """Midpoint-flux discrete energy int <A grad u, grad u> + 2 f u."""
    grid = problem.grid
    op = assemble_operator(grid, problem.field)
    f_nodes = problem.field.f_at(grid.points()).reshape((grid.nodes,) * grid.n)
    trap = _trapezoid_weights(grid)
    return op.quadratic_energy(solution.u) + \
        2.0 * grid.h ** grid.n * float(np.sum(trap * f_nodes * solution.u))


def dump_solution(solution: GridSolution, csv_path, meta: dict | None = None,
                  float_fmt: str = "%.17g") -> None:
    """Write the solution as CSV plus a JSON sidecar.

    CSV columns: i,j[,k],x,y[,z],u,active.  The sidecar records the grid,
    the residual and the iteration count plus any caller metadata.
    """
    grid = solution.grid
    axes = grid.axes
    idx = np.meshgrid(*[np.arange(grid.nodes)] * grid.n, indexing="ij")
    coords = np.meshgrid(*axes, indexing="ij")
    header = (["i", "j", "x", "y"] if grid.n == 2 else ["i", "j", "k", "x", "y", "z"])
    header += ["u", "active"]
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        cols = [m.ravel() for m in idx] + [c.ravel() for c in coords]
        uflat = solution.u.ravel()
        aflat = solution.active_mask.ravel().astype(int)
        for row in range(uflat.size):
            writer.writerow([str(int(c[row])) for c in cols[:grid.n]]
                            + [float_fmt % c[row] for c in cols[grid.n:]]
                            + [float_fmt % uflat[row], str(aflat[row])])
    sidecar = {
        "grid": {"n": grid.n, "nodes": grid.nodes, "h": grid.h,
                 "half_width": grid.half_width},
        "complementarity_residual": solution.complementarity_residual,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "tol": solution.tol,
    }
    if meta:
        sidecar.update(meta)
    with open(str(csv_path).rsplit(".", 1)[0] + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
