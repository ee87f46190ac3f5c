"""Energy functionals: E, H, Phi, Psi, adjusted quantities, calibration."""

import csv
import json
import math

import numpy as np
import pytest
from scipy.integrate import quad

from obstacle_lab import coefficients as co, energies as en, oracles

IDENTITY = co.make_field("identity")
ORIGIN = np.zeros(2)


class ConstantOne:
    def value(self, pts):
        return np.ones(len(pts))

    def gradient(self, pts):
        return np.zeros_like(pts)


class TestBallSphereEnergies:
    def test_zero_solution(self):
        class Zero:
            def value(self, pts):
                return np.zeros(len(pts))

            def gradient(self, pts):
                return np.zeros_like(pts)

        assert en.ball_energy(Zero(), IDENTITY, ORIGIN, 0.3) == 0.0
        assert en.sphere_energy(Zero(), IDENTITY, ORIGIN, 0.3) == 0.0
        assert en.weiss_phi(Zero(), IDENTITY, ORIGIN, 0.3) == 0.0

    def test_quadratic_closed_forms(self):
        # E(r) = int_{B_r} (|x|^2/4 + |x|^2/2) = 3 pi r^4 / 8,
        # H(r) = 2 pi r (r^2/4)^2 = pi r^5 / 8
        orc = oracles.quadratic(np.eye(2) / 4.0)
        for r in (0.1, 0.3, 0.7):
            assert en.ball_energy(orc, IDENTITY, ORIGIN, r) == \
                pytest.approx(3.0 * np.pi * r ** 4 / 8.0, rel=1e-10)
            assert en.sphere_energy(orc, IDENTITY, ORIGIN, r) == \
                pytest.approx(np.pi * r ** 5 / 8.0, rel=1e-12)

    def test_halfspace_closed_forms(self):
        # E(r) = pi r^4 / 4 and H(r) = 3 pi r^5 / 32 for the half-space model
        orc = oracles.halfspace([1.0, 0.0])
        r = 0.25
        assert en.ball_energy(orc, IDENTITY, ORIGIN, r) == \
            pytest.approx(np.pi * r ** 4 / 4.0, rel=1e-6)
        assert en.sphere_energy(orc, IDENTITY, ORIGIN, r) == \
            pytest.approx(3.0 * np.pi * r ** 5 / 32.0, rel=1e-10)

    def test_mu_weighted_sphere_integral(self):
        # u == 1, A = diag(2,1), r = 1: int (2 cos^2 + sin^2) = 3 pi
        ani = co.make_field("anisotropic", diag=[2.0, 1.0])
        assert en.sphere_energy(ConstantOne(), ani, ORIGIN, 1.0) == \
            pytest.approx(3.0 * np.pi, rel=1e-12)

    def test_radius_guard_for_grid_solutions(self):
        from obstacle_lab import lcp
        grid = lcp.Grid(2, 33)
        g = oracles.annulus(0.5).value(grid.points()).reshape(33, 33)
        sol = lcp.solve(lcp.ObstacleProblem(grid, IDENTITY, g), tol=1e-8)
        fn = sol.function()
        en.ball_energy(fn, IDENTITY, np.array([0.5, 0.0]), 0.3)
        with pytest.raises(ValueError, match="margin"):
            en.ball_energy(fn, IDENTITY, np.array([0.5, 0.0]), 0.6)


class TestWeissPhi:
    def test_constant_on_homogeneous_models(self):
        theta = oracles.theta_constant(2)
        radii = [0.05, 0.1, 0.2, 0.4, 0.8]
        hs = oracles.halfspace([0.6, 0.8])
        qd = oracles.quadratic(np.diag([0.4, 0.1]))
        for r in radii:
            assert en.weiss_phi(hs, IDENTITY, ORIGIN, r) == \
                pytest.approx(theta, rel=1e-6)
            assert en.weiss_phi(qd, IDENTITY, ORIGIN, r) == \
                pytest.approx(2.0 * theta, rel=1e-8)

    def test_renormalized_quantities_bounded(self):
        orc = oracles.halfspace([1.0, 0.0])
        radii = en.radius_schedule(0.5, 12)
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, radii)
        assert np.all(tr.E >= 0.0) and np.all(tr.H >= 0.0)
        assert np.max(tr.E / radii ** 4) / np.min(tr.E / radii ** 4) < 1.001
        assert np.max(tr.H / radii ** 5) / np.min(tr.H / radii ** 5) < 1.001

    def test_extrapolation_on_constant_trace(self):
        orc = oracles.quadratic(np.eye(2) / 4.0)
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, en.radius_schedule(0.4, 8))
        assert tr.phi_extrapolated() == pytest.approx(np.pi / 8.0, rel=1e-6)


class TestPsiEnergy:
    def test_quadratic_equals_volume_integral(self):
        # Psi_v(1) = int_{B1} v for the quadratic model; both by quadrature
        orc = oracles.quadratic(np.diag([0.3, 0.2]))
        from obstacle_lab.quadrature import ball_rule
        pts, w = ball_rule(ORIGIN, 1.0)
        vol = float(np.sum(w * orc.value(pts)))
        assert en.psi_energy(orc, 2) == pytest.approx(vol, abs=1e-6)

    def test_halfspace_level(self):
        assert en.psi_energy(oracles.halfspace([1.0, 0.0]), 2) == \
            pytest.approx(np.pi / 16.0, abs=1e-9)

    def test_zero(self):
        class Zero:
            def value(self, pts):
                return np.zeros(len(pts))

            def gradient(self, pts):
                return np.zeros_like(pts)

        assert en.psi_energy(Zero(), 2) == 0.0


class TestAdjustedWeiss:
    def test_zero_constants_reduce_to_phi(self):
        orc = oracles.halfspace([1.0, 0.0])
        radii = en.radius_schedule(0.4, 8)
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, radii)
        adj = en.adjusted_weiss(tr, 3.0, co.Modulus.zero(), 0.0, 0.0)
        assert np.allclose(adj, tr.phi)

    def test_nondecreasing_for_any_constants_on_models(self):
        orc = oracles.halfspace([1.0, 0.0])
        radii = en.radius_schedule(0.4, 10)
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, radii)
        for c3, c4 in ((0.0, 1.0), (2.0, 0.5), (10.0, 0.0)):
            adj = en.adjusted_weiss(tr, 3.0, co.Modulus.holder(0.5), c3, c4)
            assert np.min(np.diff(adj)) >= -1e-12

    def test_adjustment_integral_against_quad(self):
        # independent check of the correction integral with both parts,
        # referenced in the smooth variable tau = -log t
        m = co.Modulus.log_power(3.0)
        for c3 in (0.0, 1.5):
            for r in (0.1, 0.35):
                ref, _ = quad(
                    lambda u: (math.exp(-u / 3.0) + float(m.omega(math.exp(-u))))
                    * math.exp(c3 * math.exp(-u / 3.0)),
                    -math.log(r), np.inf, limit=400)
                mine = en.adjustment_integral(r, c3, 2, 3.0, m)
                assert mine == pytest.approx(ref, rel=1e-6)

    def test_requires_sorted_radii_and_theta(self):
        orc = oracles.halfspace([1.0, 0.0])
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, [0.1, 0.2, 0.3])
        with pytest.raises(ValueError):
            en.adjusted_weiss(tr, 1.5, co.Modulus.zero(), 0.0, 0.0)
        tr.radii = tr.radii[::-1]
        with pytest.raises(ValueError):
            en.adjusted_weiss(tr, 3.0, co.Modulus.zero(), 0.0, 0.0)


class TestCalibration:
    def test_classical_case_returns_zero(self):
        orc = oracles.halfspace([1.0, 0.0])
        radii = en.radius_schedule(0.4, 16, halvings_per_step=0.2)
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, radii)
        assert en.calibrate_constants(tr, 3.0, co.Modulus.zero()) == (0.0, 0.0)

    def test_small_dip_needs_small_c4(self):
        orc = oracles.halfspace([1.0, 0.0])
        radii = en.radius_schedule(0.4, 16, halvings_per_step=0.2)
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, radii)
        tr.phi = tr.phi - 0.05 * tr.radii          # force a decreasing trend
        c3, c4 = en.calibrate_constants(tr, 3.0, co.Modulus.zero())
        assert 0.0 < max(c3, c4) <= 10.0
        adj = en.adjusted_weiss(tr, 3.0, co.Modulus.zero(), c3, c4)
        assert np.min(np.diff(adj)) >= -1e-3

    def test_impossible_calibration_flagged(self):
        # negative and steeply decreasing: the exponential weight only makes
        # it worse and no admissible C4 slope can compensate
        orc = oracles.halfspace([1.0, 0.0])
        radii = en.radius_schedule(0.4, 16, halvings_per_step=0.2)
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, radii)
        tr.phi = -1e9 * tr.radii
        with pytest.raises(en.CalibrationError):
            en.calibrate_constants(tr, 3.0, co.Modulus.zero())

    def test_needs_enough_radii(self):
        orc = oracles.halfspace([1.0, 0.0])
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, [0.1, 0.2, 0.3])
        with pytest.raises(ValueError, match="16"):
            en.calibrate_constants(tr, 3.0, co.Modulus.zero())


class TestDerivativeBound:
    def test_euler_relation_kills_rhs_on_models(self):
        # <nu, grad u> = 2u/r for 2-homogeneous solutions
        for orc in (oracles.halfspace([0.6, 0.8]), oracles.quadratic(np.eye(2) / 4.0)):
            for r in (0.1, 0.3):
                raw = en.derivative_bound_raw(orc, IDENTITY, ORIGIN, r)
                assert abs(raw) <= 1e-8

    def test_report_on_oracle_is_flat(self):
        orc = oracles.quadratic(np.eye(2) / 4.0)
        radii = en.radius_schedule(0.4, 8)
        report = en.weiss_derivative_bound_check(
            orc, IDENTITY, ORIGIN, radii, 3.0, co.Modulus.zero(), 0.0, 0.0)
        for row in report:
            assert abs(row["derivative"]) <= 1e-6
            assert abs(row["rhs"]) <= 1e-8
            assert row["margin"] >= -1e-6


class TestMonneau:
    def test_exact_model_distance_zero(self):
        orc = oracles.quadratic(np.eye(2) / 4.0)
        radii = en.radius_schedule(0.4, 8)
        mvals, adjusted = en.monneau(orc, IDENTITY, ORIGIN, orc, radii, 0.0,
                                     3.0, co.Modulus.zero(), require_singular=False)
        assert np.max(np.abs(mvals)) <= 1e-10
        assert np.max(np.abs(adjusted)) <= 1e-10   # c5 = 0: constantly zero

    def test_correction_nondecreasing(self):
        m = co.Modulus.log_power(3.0)
        rr = en.radius_schedule(0.4, 12)
        corr = [en.monneau_correction(r, 3.0, 2, m) for r in rr]
        assert np.min(np.diff(corr)) > 0.0

    def test_regular_center_rejected(self):
        hs = oracles.halfspace([1.0, 0.0])
        v = oracles.quadratic(np.eye(2) / 4.0)
        with pytest.raises(ValueError, match="regular"):
            en.monneau(hs, IDENTITY, ORIGIN, v, [0.1, 0.2], 0.0, 3.0,
                       co.Modulus.zero())

    def test_non_quadratic_reference_rejected(self):
        orc = oracles.quadratic(np.eye(2) / 4.0)
        with pytest.raises(ValueError, match="quadratic"):
            en.monneau(orc, IDENTITY, ORIGIN, oracles.halfspace([1.0, 0.0]),
                       [0.1, 0.2], 0.0, 3.0, co.Modulus.zero())

    def test_calibrate_c5(self):
        mvals = np.array([0.005, 0.004, 0.003, 0.0035, 0.004])
        corr = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
        c5 = en.calibrate_c5(mvals, corr)
        assert c5 <= 0.1
        assert np.min(np.diff(mvals + c5 * corr)) >= -1e-3


class TestTraceSerialization:
    def test_round_trip_seventeen_digits(self, tmp_path):
        orc = oracles.halfspace([1.0, 0.0])
        radii = en.radius_schedule(0.4, 6)
        tr = en.compute_trace(orc, IDENTITY, ORIGIN, radii)
        tr.phi_adjusted = tr.phi.copy()
        tr.theta_exp = 3.0
        tr.modulus = co.Modulus.holder(0.5)
        path = tmp_path / "trace.csv"
        en.write_trace(tr, path, meta={"config_hash": "deadbeef"})
        with open(path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(radii)
        for k, row in enumerate(rows):
            assert float(row["r"]) == tr.radii[k]
            assert float(row["E"]) == tr.E[k]
            assert float(row["phi"]) == tr.phi[k]
            assert float(row["phi_adjusted"]) == tr.phi_adjusted[k]
            assert row["monneau"] == ""
            assert row["config_hash"] == "deadbeef"
        sidecar = json.loads((tmp_path / "trace.json").read_text())
        assert sidecar["modulus"]["kind"] == "holder"
        assert sidecar["schema_version"] == 1
