"""Epiperimetric contraction: extensions, constrained minimization, batches."""

import numpy as np
import pytest

from obstacle_lab import epiperimetric as ep, oracles
from obstacle_lab.energies import psi_energy

NU = np.array([1.0, 0.0])
W = oracles.halfspace(NU)


class TestHomogeneousExtension:
    def test_halfspace_boundary_reproduces_model(self):
        ext = ep.homogeneous_extension(lambda dirs: W.value(dirs))
        rng = np.random.default_rng(0)
        pts = rng.uniform(-0.7, 0.7, size=(300, 2))
        pts = pts[np.linalg.norm(pts, axis=1) > 0.05]
        assert np.max(np.abs(ext.value(pts) - W.value(pts))) < 1e-6

    def test_constant_boundary(self):
        ext = ep.homogeneous_extension(lambda dirs: np.full(len(dirs), 0.3))
        pts = np.array([[0.5, 0.0], [0.25, 0.25], [0.0, -0.8]])
        assert np.allclose(ext.value(pts), 0.3 * np.sum(pts ** 2, axis=1),
                           atol=1e-12)

    def test_quadratic_boundary(self):
        orc = oracles.quadratic(np.diag([0.3, 0.2]))
        ext = ep.homogeneous_extension(lambda dirs: orc.value(dirs))
        rng = np.random.default_rng(1)
        pts = rng.uniform(-0.7, 0.7, size=(200, 2))
        pts = pts[np.linalg.norm(pts, axis=1) > 0.05]
        assert np.max(np.abs(ext.value(pts) - orc.value(pts))) < 1e-6

    def test_negative_boundary_rejected(self):
        with pytest.raises(ValueError):
            ep.homogeneous_extension(lambda dirs: -np.ones(len(dirs)))


class TestMinimizePsi:
    def test_model_is_already_minimal(self):
        phi = ep.HomogeneousDatum(NU, np.zeros(4), np.zeros(4), 0.0)
        sol, decrease, grid, phi_nodes = ep.minimize_psi(phi, nodes=97)
        assert decrease <= 0.0
        assert abs(decrease) < 1e-4         # w minimizes among its own data
        assert np.all(sol.u >= 0.0)

    def test_perturbed_datum_strictly_improves(self):
        rng = np.random.default_rng(5)
        phi = ep.random_datum(rng, NU, 0.05)
        sol, decrease, grid, phi_nodes = ep.minimize_psi(phi, nodes=97)
        assert decrease < -1e-6

    def test_quadratic_datum_near_equality(self):
        # the quadratic model solves the unconstrained equation, so the
        # minimizer barely improves on it
        orc = oracles.quadratic(np.eye(2) / 4.0)
        sol, decrease, grid, phi_nodes = ep.minimize_psi(orc, nodes=97)
        assert -1e-3 < decrease <= 0.0


class TestEpiperimetricCheck:
    def test_zero_gap_flagged_neutral(self):
        phi = ep.HomogeneousDatum(NU, np.zeros(4), np.zeros(4), 0.0)
        chk = ep.epiperimetric_check(phi, W, nodes=97)
        assert chk.neutral
        assert chk.psi_xi <= chk.psi_phi + 1e-8

    def test_far_datum_rejected(self):
        phi = ep.HomogeneousDatum(NU, np.array([0.5, 0, 0, 0]), np.zeros(4), 0.2)
        with pytest.raises(ValueError, match="too far"):
            ep.epiperimetric_check(phi, W, delta=0.05, nodes=97)

    def test_contraction_record(self):
        rng = np.random.default_rng(9)
        phi = ep.random_datum(rng, NU, 0.05)
        chk = ep.epiperimetric_check(phi, W, nodes=129)
        assert not chk.neutral
        assert chk.delta <= 0.05
        assert chk.psi_xi <= chk.psi_phi + 1e-8
        assert chk.ratio <= 1.0
        assert chk.boundary_defect <= 2.0 * (2.0 / 128.0)

    def test_theta_matches_reference(self):
        phi = ep.HomogeneousDatum(NU, np.zeros(4), np.zeros(4), 0.0)
        chk = ep.epiperimetric_check(phi, W, nodes=97)
        assert chk.theta == pytest.approx(oracles.theta_constant(2), abs=1e-9)


class TestBatch:
    def test_small_batch_contracts(self, tmp_path):
        checks, summary = ep.run_batch(count=4, delta=0.05, seed=2, nodes=97)
        ratios = [c.ratio for c in checks if not c.neutral]
        assert len(ratios) == 4
        assert all(r <= 1.0 for r in ratios)
        assert summary["kappa_empirical"] >= 0.01
        ep.write_batch(checks, summary, tmp_path / "epi.csv",
                       meta={"config_hash": "cafe"})
        lines = (tmp_path / "epi.csv").read_text().splitlines()
        assert lines[0] == "seed,delta,psi_phi,psi_xi,ratio,config_hash"
        assert len(lines) == 5
        import json
        payload = json.loads((tmp_path / "epi.json").read_text())
        assert payload["config_hash"] == "cafe"
        assert payload["kappa_empirical"] == summary["kappa_empirical"]

    def test_h1_distance_respected(self):
        rng = np.random.default_rng(3)
        for k in range(5):
            phi = ep.random_datum(rng, NU, 0.05)
            assert ep.h1_distance(phi, W) <= 0.05


class TestDatumCalculus:
    def test_gradient_consistency(self):
        # finite differences of the clipped datum match the analytic gradient
        rng = np.random.default_rng(7)
        phi = ep.random_datum(rng, NU, 0.05)
        pts = rng.uniform(-0.7, 0.7, size=(200, 2))
        ok = np.abs(phi.raw(pts)) > 1e-3      # stay away from the clip set
        pts = pts[ok]
        eps = 1e-7
        for d in range(2):
            e = np.zeros(2)
            e[d] = eps
            fd = (phi.value(pts + e) - phi.value(pts - e)) / (2 * eps)
            assert np.max(np.abs(fd - phi.gradient(pts)[:, d])) < 1e-5

    def test_psi_of_model_via_both_paths(self):
        phi = ep.HomogeneousDatum(NU, np.zeros(4), np.zeros(4), 0.0)
        assert psi_energy(phi, 2) == pytest.approx(psi_energy(W, 2), abs=1e-12)
