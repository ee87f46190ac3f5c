"""PSOR solver: stencils, convergence, complementarity, energy decrease."""

import json

import numpy as np
import pytest

from obstacle_lab import coefficients as co, lcp, oracles
from obstacle_lab.quadrature import _gauss


def annulus_problem(nodes, a=0.5):
    fld = co.make_field("identity")
    grid = lcp.Grid(2, nodes)
    g = oracles.annulus(a).value(grid.points()).reshape(nodes, nodes)
    return lcp.ObstacleProblem(grid, fld, g)


class TestGrid:
    def test_spacing_and_bounds(self):
        grid = lcp.Grid(2, 129)
        assert grid.h == pytest.approx(2.0 / 128.0)
        assert grid.axes[0][0] == -1.0 and grid.axes[0][-1] == 1.0
        with pytest.raises(ValueError):
            lcp.Grid(2, 9)
        with pytest.raises(ValueError):
            lcp.Grid(4, 33)

    def test_boundary_mask(self):
        grid = lcp.Grid(2, 17)
        mask = grid.boundary_mask()
        assert mask[0].all() and mask[-1].all()
        assert mask[:, 0].all() and mask[:, -1].all()
        assert not mask[1:-1, 1:-1].any()


class TestOperator:
    def test_identity_five_point_stencil(self):
        # applying to a delta function reads off the stencil row
        grid = lcp.Grid(2, 33)
        op = lcp.assemble_operator(grid, co.make_field("identity"))
        u = np.zeros((33, 33))
        u[16, 16] = 1.0
        lap = op.apply(u)
        h2 = grid.h ** 2
        assert lap[16, 16] == pytest.approx(-4.0 / h2)
        for i, j in ((15, 16), (17, 16), (16, 15), (16, 17)):
            assert lap[i, j] == pytest.approx(1.0 / h2)

    def test_diagonal_field_weights(self):
        grid = lcp.Grid(2, 33)
        op = lcp.assemble_operator(grid, co.make_field("anisotropic", diag=[2.0, 1.0]))
        u = np.zeros((33, 33))
        u[16, 16] = 1.0
        lap = op.apply(u)
        h2 = grid.h ** 2
        assert lap[17, 16] == pytest.approx(2.0 / h2)   # x neighbors
        assert lap[16, 17] == pytest.approx(1.0 / h2)   # y neighbors
        assert lap[16, 16] == pytest.approx(-6.0 / h2)

    def test_constant_fields_annihilated(self):
        grid = lcp.Grid(2, 21)
        S = np.array([[0.1, 0.05], [0.05, -0.1]])
        fld = co.make_field("holder_perturbation", gamma=0.5, S=S, lam=1.3)
        op = lcp.assemble_operator(grid, fld)
        assert np.max(np.abs(op.apply(np.ones((21, 21))))) < 1e-12

    def test_symmetry_of_assembled_matrix(self):
        # <L u, v> == <u, L v> for interior-supported u, v
        grid = lcp.Grid(2, 25)
        S = np.array([[0.1, 0.06], [0.06, -0.1]])
        fld = co.make_field("holder_perturbation", gamma=0.5, S=S, lam=1.3)
        op = lcp.assemble_operator(grid, fld)
        rng = np.random.default_rng(0)
        u = np.zeros((25, 25))
        v = np.zeros((25, 25))
        u[2:-2, 2:-2] = rng.normal(size=(21, 21))
        v[2:-2, 2:-2] = rng.normal(size=(21, 21))
        assert np.sum(op.apply(u) * v) == pytest.approx(np.sum(u * op.apply(v)),
                                                        rel=1e-12)

    def test_mixed_operator_against_flux_quadrature(self):
        # L_h applied to v = x1 must reproduce div(A e1), referenced by
        # high-order Gauss quadrature of the boundary flux of each cell
        S = np.array([[0.1, 0.05], [0.05, -0.1]])
        gamma = 0.5

        def a_mat(x, y):
            r = (x * x + y * y) ** (0.5 * gamma)
            return np.eye(2) + r * S

        def flux_div_reference(x, y, h):
            # (1/h^2) contour integral of (A e1) . n over the cell boundary
            gx, gw = _gauss(8)
            total = 0.0
            for d, sign in ((0, 1.0), (0, -1.0), (1, 1.0), (1, -1.0)):
                ts = 0.5 * h * gx
                ws = 0.5 * h * gw
                for t, w in zip(ts, ws):
                    if d == 0:
                        px, py = x + sign * h / 2.0, y + t
                        normal = np.array([sign, 0.0])
                    else:
                        px, py = x + t, y + sign * h / 2.0
                        normal = np.array([0.0, sign])
                    total += w * float(a_mat(px, py)[:, 0] @ normal)
            return total / h ** 2

        errors = []
        for nodes in (33, 65):
            grid = lcp.Grid(2, nodes)
            fld = co.make_field("holder_perturbation", gamma=gamma, S=S, lam=1.3)
            op = lcp.assemble_operator(grid, fld)
            pts = grid.points().reshape(nodes, nodes, 2)
            v = pts[..., 0].copy()
            lap = op.apply(v)
            worst = 0.0
            ax = grid.axes[0]
            for i in range(2, nodes - 2):
                for j in range(2, nodes - 2):
                    if ax[i] ** 2 + ax[j] ** 2 < 0.09:
                        continue   # |x|^gamma kink at the origin
                    ref = flux_div_reference(ax[i], ax[j], grid.h)
                    worst = max(worst, abs(lap[i, j] - ref))
            errors.append(worst)
        assert errors[0] < 0.05                  # O(h) consistency
        assert errors[1] < 0.7 * errors[0]       # decreasing with h


class TestSolve:
    def test_zero_data_gives_zero(self):
        grid = lcp.Grid(2, 33)
        prob = lcp.ObstacleProblem(grid, co.make_field("identity"),
                                   np.zeros((33, 33)))
        sol = lcp.solve(prob, tol=1e-12)
        assert np.max(np.abs(sol.u)) == 0.0
        assert sol.complementarity_residual == 0.0
        assert sol.converged

    def test_negative_dirichlet_rejected(self):
        grid = lcp.Grid(2, 33)
        g = np.zeros((33, 33))
        g[0, 5] = -0.1
        with pytest.raises(ValueError, match="nonnegative"):
            lcp.ObstacleProblem(grid, co.make_field("identity"), g)

    def test_annulus_accuracy_and_order(self):
        errs = {}
        for nodes in (65, 129):
            prob = annulus_problem(nodes)
            sol = lcp.solve(prob, tol=1e-10, omega="auto")
            assert sol.converged
            assert sol.complementarity_residual <= 1e-10
            exact = oracles.annulus(0.5).value(prob.grid.points()).reshape(nodes, nodes)
            errs[nodes] = np.max(np.abs(sol.u - exact))
        order = np.log(errs[65] / errs[129]) / np.log(2.0)
        assert order >= 1.0

    def test_solution_invariants(self):
        prob = annulus_problem(65)
        sol = lcp.solve(prob, tol=1e-10, omega="auto")
        assert np.all(sol.u >= 0.0)
        op = lcp.assemble_operator(prob.grid, prob.field)
        lap = op.apply(sol.u)
        inner = (slice(1, -1),) * 2
        f = np.ones_like(sol.u)
        # active nodes satisfy the equation, inactive ones the inequality
        act = sol.active_mask[inner]
        eq = (lap - f)[inner]
        assert np.max(np.abs(eq[act])) <= 1e-9
        assert np.max(eq[~act]) <= 1e-9

    def test_halfspace_active_boundary_location(self):
        nodes = 65
        grid = lcp.Grid(2, nodes)
        g = oracles.halfspace([1.0, 0.0]).value(grid.points()).reshape(nodes, nodes)
        prob = lcp.ObstacleProblem(grid, co.make_field("identity"), g)
        sol = lcp.solve(prob, tol=1e-10, omega="auto")
        from obstacle_lab.blowup import extract_free_boundary
        fb = extract_free_boundary(sol)
        assert len(fb) > 0
        assert np.max(np.abs(fb[:, 0])) <= 2.0 * grid.h

    def test_energy_monotone_per_sweep(self):
        prob = annulus_problem(33)
        sol = lcp.solve(prob, tol=1e-10, omega=1.8, track_energy=True)
        diffs = np.diff(sol.energies)
        assert np.max(diffs) <= 1e-12

    def test_energy_below_clipped_unconstrained(self):
        prob = annulus_problem(65)
        sol = lcp.solve(prob, tol=1e-10, omega="auto")
        unconstrained = lcp.solve(prob, tol=1e-8, omega="auto", project=False,
                                  max_iter=40_000)
        clipped = lcp.GridSolution(
            grid=prob.grid, u=np.clip(unconstrained.u, 0.0, None),
            active_mask=unconstrained.u > 0, complementarity_residual=0.0,
            iterations=0, converged=True, tol=1e-8)
        assert lcp.energy_of(sol, prob) <= lcp.energy_of(clipped, prob) + 1e-12

    def test_max_iter_flagged(self):
        prob = annulus_problem(65)
        sol = lcp.solve(prob, tol=1e-14, max_iter=5)
        assert not sol.converged
        assert sol.iterations == 5

    def test_bad_parameters(self):
        prob = annulus_problem(33)
        with pytest.raises(ValueError):
            lcp.solve(prob, tol=-1.0)
        with pytest.raises(ValueError):
            lcp.solve(prob, omega=2.5)

    def test_deterministic(self):
        prob = annulus_problem(33)
        a = lcp.solve(prob, tol=1e-10)
        b = lcp.solve(prob, tol=1e-10)
        assert np.array_equal(a.u, b.u)


class TestEnergyOf:
    def test_zero(self):
        prob = annulus_problem(33)
        zero = lcp.GridSolution(grid=prob.grid, u=np.zeros((33, 33)),
                                active_mask=np.zeros((33, 33), bool),
                                complementarity_residual=0.0, iterations=0,
                                converged=True, tol=1e-10)
        assert lcp.energy_of(zero, prob) == 0.0

    def test_halfspace_energy_matches_analytic(self):
        # int over [-1,1]^2 of |grad w|^2 + 2w = 2/3 + 2/3 = 4/3
        nodes = 129
        grid = lcp.Grid(2, nodes)
        fld = co.make_field("identity")
        w = oracles.halfspace([1.0, 0.0]).value(grid.points()).reshape(nodes, nodes)
        sol = lcp.GridSolution(grid=grid, u=w, active_mask=w > 0,
                               complementarity_residual=0.0, iterations=0,
                               converged=True, tol=1e-10)
        prob = lcp.ObstacleProblem(grid, fld, w)
        assert lcp.energy_of(sol, prob) == pytest.approx(4.0 / 3.0, rel=0.01)


class TestQuadraticGrowth:
    def test_growth_ratio_stable_on_annulus(self):
        from obstacle_lab.blowup import extract_free_boundary, growth_ratio
        prob = annulus_problem(129)
        sol = lcp.solve(prob, tol=1e-10, omega="auto")
        fb = extract_free_boundary(sol)
        x0 = fb[np.argmin(np.abs(fb[:, 1]))]      # near (0.5, 0)
        radii = np.array([4 * prob.grid.h, 0.1, 0.17, 0.25])
        ratios = growth_ratio(sol.function(), x0, radii)
        assert np.all(ratios <= 2.0)
        assert np.all(ratios >= 0.0)


class TestDump:
    def test_csv_and_sidecar(self, tmp_path):
        prob = annulus_problem(17)
        sol = lcp.solve(prob, tol=1e-10)
        path = tmp_path / "solution.csv"
        lcp.dump_solution(sol, path, meta={"config_hash": "abc123"})
        lines = path.read_text().splitlines()
        assert lines[0] == "i,j,x,y,u,active"
        assert len(lines) == 17 * 17 + 1
        sidecar = json.loads((tmp_path / "solution.json").read_text())
        assert sidecar["grid"]["nodes"] == 17
        assert sidecar["config_hash"] == "abc123"
        assert sidecar["converged"] is True
