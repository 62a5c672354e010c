"""Newton solver: residuals, convergence, uniqueness, designed fallbacks."""

import numpy as np
import pytest

from jflowlab.errors import ContinuationRequired, PositivityError, ValidationError
from jflowlab.elliptic import (EllipticProblem, newton_solve, residual,
                               uniqueness_probe)
from jflowlab.geometry import (CosineMode, GeometrySetup, Grid,
                               PotentialField, ThetaSpec,
                               degenerate_theta_example, potential_from_modes,
                               random_bandlimited, zero_potential)


def smooth_setup(N=32, beta=0.5):
    grid = Grid(2, N)
    psi = potential_from_modes(grid, [CosineMode((1, 0), 0.2 / np.pi ** 2)])
    theta = ThetaSpec(grid, np.diag([0.5, 0.5]), psi)
    return GeometrySetup.build(grid, theta, beta=beta)


class TestResidual:
    def test_stationary_zero(self):
        grid = Grid(2, 16)
        q = 0.4
        setup = GeometrySetup.build(grid, ThetaSpec(grid, np.diag([q, q])), beta=0.0)
        problem = EllipticProblem.twisted_j_equation(setup)
        # c_beta comes through the quadrature mean, which can sit one ulp off
        assert np.abs(residual(zero_potential(grid), problem)).max() < 1e-15

    def test_missing_beta_mass(self):
        # u = 0 with c = 2q but rho = 1: residual is -1 everywhere.
        grid = Grid(2, 16)
        q = 0.4
        theta = ThetaSpec(grid, np.diag([q, q]))
        problem = EllipticProblem(theta, 2 * q, 1.0)
        res = residual(zero_potential(grid), problem)
        assert np.abs(res + 1.0).max() < 1e-14

    def test_positivity_guard(self):
        grid = Grid(2, 16)
        theta = ThetaSpec(grid, np.diag([0.5, 0.5]))
        problem = EllipticProblem(theta, 1.0, 0.0)
        bad = potential_from_modes(grid, [CosineMode((1, 0), 1.5 / np.pi ** 2)])
        with pytest.raises(PositivityError):
            residual(bad, problem)

    def test_psi_must_be_positive(self):
        grid = Grid(2, 16)
        theta = ThetaSpec(grid, np.diag([0.5, 0.5]))
        with pytest.raises(ValidationError):
            EllipticProblem(theta, 0.0, 0.5)


class TestNewton:
    def test_already_solved_one_check(self):
        grid = Grid(2, 16)
        setup = GeometrySetup.build(grid, ThetaSpec(grid, np.diag([0.4, 0.4])),
                                    beta=0.3)
        problem = EllipticProblem.twisted_j_equation(setup)
        result = newton_solve(problem, zero_potential(grid), tol=1e-10)
        assert result.iterations == 0
        assert result.sup_residual < 1e-15

    def test_smooth_fixture_fast_convergence(self):
        setup = smooth_setup(N=64)
        problem = EllipticProblem.twisted_j_equation(setup)
        result = newton_solve(problem, zero_potential(setup.grid), tol=1e-10)
        assert result.converged
        assert result.sup_residual < 1e-10
        assert result.iterations <= 10
        assert abs(result.u.values.mean()) < 1e-12

    def test_quadratic_tail(self):
        setup = smooth_setup(N=32)
        problem = EllipticProblem.twisted_j_equation(setup)
        result = newton_solve(problem, zero_potential(setup.grid), tol=1e-11)
        hist = result.residual_history
        tail = [b / a for a, b in zip(hist, hist[1:]) if a < 1e-3 and a > 0]
        assert tail, "no iterates entered the tail regime"
        assert max(tail) <= 0.3

    def test_generalized_matches_specialized(self):
        setup = smooth_setup(N=32)
        special = EllipticProblem.twisted_j_equation(setup)
        general = EllipticProblem(setup.theta,
                                  np.full(setup.grid.shape, setup.c_beta),
                                  np.full(setup.grid.shape, setup.beta))
        a = newton_solve(special, zero_potential(setup.grid), tol=1e-11)
        b = newton_solve(general, zero_potential(setup.grid), tol=1e-11)
        assert np.abs(a.u.values - b.u.values).max() < 1e-10

    def test_sup_normalization(self):
        setup = smooth_setup(N=32)
        problem = EllipticProblem.twisted_j_equation(setup, normalization="sup")
        result = newton_solve(problem, zero_potential(setup.grid), tol=1e-10)
        assert result.u.values.max() == pytest.approx(0.0, abs=1e-13)

    def test_degenerate_beta_zero_falls_back(self):
        grid = Grid(2, 32)
        theta = degenerate_theta_example(grid, 1.0, 1.0)
        setup = GeometrySetup.build(grid, theta, beta=0.0)
        problem = EllipticProblem.twisted_j_equation(setup)
        with pytest.raises(ContinuationRequired):
            newton_solve(problem, zero_potential(grid))

    def test_degenerate_with_beta_solves(self):
        grid = Grid(2, 32)
        theta = degenerate_theta_example(grid, 1.0, 1.0)
        setup = GeometrySetup.build(grid, theta, beta=0.5)
        problem = EllipticProblem.twisted_j_equation(setup)
        result = newton_solve(problem, zero_potential(grid), tol=1e-9, max_iter=40)
        assert result.sup_residual < 1e-9


class TestUniqueness:
    def test_two_seeds_agree(self):
        setup = smooth_setup(N=32)
        problem = EllipticProblem.twisted_j_equation(setup)
        rng = np.random.default_rng(11)
        seed = random_bandlimited(setup.grid, rng, max_mode=2, amplitude=0.005)
        from jflowlab.geometry import omega_phi
        while omega_phi(seed).min_eig()[0] < 0.2:
            seed = PotentialField(setup.grid, 0.5 * seed.values)
        report = uniqueness_probe(problem, [zero_potential(setup.grid), seed],
                                  tol=1e-10)
        assert report.agree
        assert report.max_pairwise_diff < 1e-6

    def test_single_seed_trivially_passes(self):
        setup = smooth_setup(N=16)
        problem = EllipticProblem.twisted_j_equation(setup)
        report = uniqueness_probe(problem, [zero_potential(setup.grid)])
        assert report.agree
        assert report.max_pairwise_diff == 0.0

    def test_flow_limit_matches_newton(self):
        from jflowlab.flow import FlowConfig, run_to_convergence
        setup = smooth_setup(N=16)
        cfg = FlowConfig(tol_converge=1e-9, max_steps=100_000)
        flow = run_to_convergence(zero_potential(setup.grid), setup, 0.0, cfg)
        problem = EllipticProblem.twisted_j_equation(setup)
        newton = newton_solve(problem, zero_potential(setup.grid), tol=1e-10)
        assert flow.converged
        assert np.abs(flow.phi.values - newton.u.values).max() < 1e-6


class TestOscillationFamily:
    def test_common_bound_across_family(self):
        # Problems sharing grid, twist-form bound and data bounds: the
        # oscillations of the solutions stay within one modest constant.
        grid = Grid(2, 32)
        rng = np.random.default_rng(17)
        oscs = []
        for k in range(5):
            psi = random_bandlimited(grid, rng, max_mode=2, amplitude=0.004)
            theta = ThetaSpec(grid, np.diag([0.5, 0.5]), psi)
            if not theta.validate().psd_ok:
                psi = PotentialField(grid, 0.3 * psi.values)
                theta = ThetaSpec(grid, np.diag([0.5, 0.5]), psi)
            setup = GeometrySetup.build(grid, theta, beta=0.5)
            problem = EllipticProblem.twisted_j_equation(setup)
            result = newton_solve(problem, zero_potential(grid), tol=1e-10)
            oscs.append(result.u.oscillation())
        assert max(oscs) < 0.5
