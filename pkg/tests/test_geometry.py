"""Torus geometry: spectral Hessians, theta specs, cone checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jflowlab.errors import PositivityError, ValidationError
from jflowlab.geometry import (CosineMode, Degeneracy, FormField,
                               GeometrySetup, Grid, LocusPiece,
                               PotentialField, ThetaSpec, cohomology_constant,
                               degenerate_theta_example, omega_phi,
                               potential_from_modes, random_bandlimited,
                               reduced_hessian, subsolution_check,
                               wedge_quotients, zero_potential)
from jflowlab.pointwise import simultaneous_frame


class TestGrid:
    def test_invariants(self):
        Grid(2, 8)
        with pytest.raises(ValidationError):
            Grid(2, 6)
        with pytest.raises(ValidationError):
            Grid(2, 9)
        with pytest.raises(ValidationError):
            Grid(4, 16)

    def test_spacing(self):
        assert Grid(2, 64).spacing == 1.0 / 64


class TestReducedHessian:
    def test_zero_potential(self, grid16):
        H = reduced_hessian(zero_potential(grid16))
        assert np.all(H.matrices == 0.0)

    def test_annihilates_constants_exactly(self, grid16):
        H = reduced_hessian(PotentialField(grid16, np.full(grid16.shape, 3.7)))
        assert np.all(H.matrices == 0.0)

    def test_single_cosine(self, grid16):
        phi = potential_from_modes(grid16, [CosineMode((1, 0), 1.0)])
        H = reduced_hessian(phi)
        x = grid16.axis_coords()
        expected = -np.pi ** 2 * np.cos(2 * np.pi * x)[:, None] * np.ones(grid16.N)
        assert np.abs(H.matrices[..., 0, 0] - expected).max() < 1e-12
        assert np.abs(H.matrices[..., 0, 1]).max() < 1e-13
        assert np.abs(H.matrices[..., 1, 1]).max() < 1e-13

    def test_mixed_derivative(self, grid16):
        # phi = cos(2 pi x1) cos(2 pi x2) as a sum of two cosine modes.
        phi = potential_from_modes(
            grid16, [CosineMode((1, 1), 0.5), CosineMode((1, -1), 0.5)])
        H = reduced_hessian(phi)
        x = grid16.axis_coords()
        s1 = np.sin(2 * np.pi * x)[:, None]
        s2 = np.sin(2 * np.pi * x)[None, :]
        assert np.abs(H.matrices[..., 0, 1] - np.pi ** 2 * s1 * s2).max() < 1e-12

    @given(st.integers(-3, 3), st.integers(-3, 3),
           st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
    @settings(max_examples=25, deadline=None)
    def test_linearity_and_zero_mean(self, k1, k2, a, b):
        grid = Grid(2, 16)
        phi1 = potential_from_modes(grid, [CosineMode((k1, k2), a)]) \
            if (k1, k2) != (0, 0) else zero_potential(grid)
        phi2 = potential_from_modes(grid, [CosineMode((1, 0), b)])
        combo = PotentialField(grid, phi1.values + phi2.values)
        H = reduced_hessian(combo).matrices
        H12 = reduced_hessian(phi1).matrices + reduced_hessian(phi2).matrices
        assert np.abs(H - H12).max() < 1e-12
        assert abs(H[..., 0, 0].mean()) < 1e-13
        assert abs(H[..., 0, 1].mean()) < 1e-13
        assert np.abs(H - np.swapaxes(H, -1, -2)).max() == 0.0

    def test_n3_mixed(self):
        grid = Grid(3, 12)
        phi = potential_from_modes(
            grid, [CosineMode((1, 1, 0), 0.5), CosineMode((1, -1, 0), 0.5)])
        H = reduced_hessian(phi)
        x = grid.axis_coords()
        s1 = np.sin(2 * np.pi * x)[:, None, None]
        s2 = np.sin(2 * np.pi * x)[None, :, None]
        expect = np.pi ** 2 * s1 * s2 * np.ones(grid.N)[None, None, :]
        assert np.abs(H.matrices[..., 0, 1] - expect).max() < 1e-12
        assert np.abs(H.matrices[..., 2, 2]).max() < 1e-13


class TestOmegaPhi:
    def test_zero(self, grid16):
        form = omega_phi(zero_potential(grid16))
        assert np.abs(form.matrices - np.eye(2)).max() == 0.0
        assert form.min_eig()[0] == pytest.approx(1.0)

    @pytest.mark.parametrize("a", [0.05, 0.3])
    def test_margin_positive(self, grid16, a):
        phi = potential_from_modes(grid16, [CosineMode((1, 0), a)])
        margin, _ = omega_phi(phi).min_eig()
        assert margin == pytest.approx(1.0 - a * np.pi ** 2, abs=1e-10)

    def test_margin_negative_reported(self, grid16):
        a = 1.2 / np.pi ** 2
        phi = potential_from_modes(grid16, [CosineMode((1, 0), a)])
        margin, loc = omega_phi(phi).min_eig()
        assert margin == pytest.approx(1.0 - 1.2, abs=1e-10)
        assert loc[0] == 0  # worst point on the crest x1 = 0

    def test_constant_shift_invariance(self, grid16, rng):
        phi = random_bandlimited(grid16, rng, amplitude=0.01)
        a = omega_phi(phi).matrices
        b = omega_phi(phi.shifted(2.5)).matrices
        assert np.abs(a - b).max() < 1e-12


class TestCohomologyConstant:
    def test_constant_field(self, grid16):
        spec = ThetaSpec(grid16, np.diag([0.5, 0.5]))
        assert cohomology_constant(spec, 0.5) == pytest.approx(1.5, abs=1e-14)

    def test_hessian_part_integrates_to_zero(self, grid16, rng):
        for _ in range(10):
            psi = random_bandlimited(grid16, rng, amplitude=0.002)
            spec = ThetaSpec(grid16, np.diag([1.0, 1.0]), psi)
            assert cohomology_constant(spec, 0.0) == pytest.approx(2.0, abs=1e-12)

    def test_pure_exact_form(self, grid16):
        psi = potential_from_modes(grid16, [CosineMode((1, 0), 0.01)])
        spec = ThetaSpec(grid16, np.zeros((2, 2)), psi)
        assert cohomology_constant(spec, 1.0) == pytest.approx(1.0, abs=1e-14)


class TestWedgeQuotients:
    def test_identity(self, grid16):
        trace, vol = wedge_quotients(FormField.identity(grid16),
                                     FormField.identity(grid16))
        assert np.abs(trace - 2.0).max() < 1e-14
        assert np.abs(vol - 1.0).max() < 1e-14

    def test_scaled_diagonal(self, grid16):
        G = FormField.constant(grid16, np.diag([2.0, 2.0]))
        T = FormField.identity(grid16)
        trace, vol = wedge_quotients(G, T)
        assert np.abs(trace - 1.0).max() < 1e-14
        assert np.abs(vol - 0.25).max() < 1e-14

    def test_singular_rejected(self, grid16):
        phi = potential_from_modes(grid16, [CosineMode((1, 0), 1.5 / np.pi ** 2)])
        with pytest.raises(PositivityError) as err:
            wedge_quotients(omega_phi(phi), FormField.identity(grid16))
        assert err.value.location is not None

    @pytest.mark.parametrize("n,N", [(2, 12), (3, 8)])
    def test_cross_module_frame_consistency(self, n, N):
        grid = Grid(n, N)
        rng = np.random.default_rng(5 + n)
        phi = random_bandlimited(grid, rng, max_mode=2, amplitude=0.004)
        while omega_phi(phi).min_eig()[0] < 0.1:
            phi = PotentialField(grid, 0.5 * phi.values)
        psi = random_bandlimited(grid, rng, max_mode=2, amplitude=0.0005)
        G = omega_phi(phi)
        T = ThetaSpec(grid, 0.5 * np.eye(n), psi).realize()
        trace, vol = wedge_quotients(G, T)
        flatG = G.matrices.reshape(-1, n, n)
        flatT = T.matrices.reshape(-1, n, n)
        for i in range(0, flatG.shape[0], max(1, flatG.shape[0] // 64)):
            lam, mu = simultaneous_frame(flatG[i], flatT[i])
            assert trace.reshape(-1)[i] == pytest.approx(
                float(np.sum(mu.values / lam.values)), abs=1e-10)
            assert vol.reshape(-1)[i] == pytest.approx(
                1.0 / float(np.prod(lam.values)), rel=1e-10)


class TestSubsolution:
    def test_half_identity(self, grid16):
        theta = ThetaSpec(grid16, np.diag([0.5, 0.5]))
        report = subsolution_check(zero_potential(grid16), theta, 1.0)
        assert report.margin == pytest.approx(0.5, abs=1e-12)
        assert report.passed

    def test_identity_theta(self, grid16):
        theta = ThetaSpec(grid16, np.diag([1.0, 1.0]))
        report = subsolution_check(zero_potential(grid16), theta, 2.0)
        assert report.margin == pytest.approx(1.0, abs=1e-12)

    def test_negative_margin_located(self, grid16):
        # Bump theta_11 above c_beta somewhere: margin goes negative there.
        beta = 0.05
        amp = 0.5 * 4 / (2 * np.pi) ** 2
        psi = potential_from_modes(grid16, [CosineMode((1, 0), -amp)])
        theta = ThetaSpec(grid16, np.diag([3.0, 0.1]), psi)
        assert theta.validate().psd_ok
        c_beta = cohomology_constant(theta, beta)
        assert c_beta == pytest.approx(3.1 + beta)
        report = subsolution_check(zero_potential(grid16), theta, c_beta)
        assert not report.passed
        assert report.margin < 0
        # theta_11 peaks on the crest x1 = 0 where the bump is largest
        assert report.location[0] == 0

    def test_rejects_bad_candidate(self, grid16):
        theta = ThetaSpec(grid16, np.diag([0.5, 0.5]))
        bad = potential_from_modes(grid16, [CosineMode((1, 0), 1.5 / np.pi ** 2)])
        with pytest.raises(PositivityError):
            subsolution_check(bad, theta, 1.0)


class TestDegenerateExample:
    def test_closed_form_eigenvalues(self, grid32):
        t1, t2 = 1.3, 0.8
        spec = degenerate_theta_example(grid32, t1, t2)
        form = spec.realize()
        x = grid32.axis_coords()
        expect_11 = t1 * (1.0 - np.cos(2 * np.pi * x))[:, None] * np.ones(grid32.N)
        assert np.abs(form.matrices[..., 0, 0] - expect_11).max() < 1e-12
        assert np.abs(form.matrices[..., 1, 1] - t2).max() < 1e-12
        assert np.abs(form.matrices[..., 0, 1]).max() < 1e-13

    def test_vanishes_on_locus_only(self, grid32):
        spec = degenerate_theta_example(grid32, 1.0, 1.0)
        form = spec.realize()
        mins = np.linalg.eigvalsh(form.matrices)[..., 0]
        assert mins[0, 0] == pytest.approx(0.0, abs=1e-12)
        mid = grid32.N // 2
        assert mins[mid, 0] == pytest.approx(1.0, abs=1e-12)

    def test_distance_power_bound(self, grid32):
        spec = degenerate_theta_example(grid32, 1.0, 1.0)
        report = spec.validate()
        assert report.psd_ok and report.degeneracy_ok
        c0 = spec.degeneracy.c0
        assert c0 > 0
        dist = spec.degeneracy.distance_field(grid32)
        mins = np.linalg.eigvalsh(spec.realize().matrices)[..., 0]
        assert np.all(mins + 1e-12 >= c0 * dist ** 2)

    def test_cohomology(self, grid32):
        spec = degenerate_theta_example(grid32, 1.0, 1.0)
        assert cohomology_constant(spec, 0.5) == pytest.approx(2.5, abs=1e-12)

    def test_rejects_nonpositive(self, grid32):
        with pytest.raises(ValidationError):
            degenerate_theta_example(grid32, 0.0, 1.0)


class TestThetaSpecValidation:
    def test_indefinite_rejected(self, grid16):
        spec = ThetaSpec(grid16, np.diag([1.0, -0.1]))
        report = spec.validate()
        assert not report.psd_ok
        with pytest.raises(ValidationError):
            GeometrySetup.build(grid16, spec, beta=0.0)

    def test_declared_c0_checked(self, grid32):
        spec = degenerate_theta_example(grid32, 1.0, 1.0)
        too_big = Degeneracy(1.0, spec.degeneracy.locus, c0=100.0)
        bad = ThetaSpec(grid32, spec.theta0, spec.psi, too_big)
        assert bad.validate().degeneracy_ok is False

    def test_point_locus_distance(self, grid16):
        deg = Degeneracy(1.0, (LocusPiece.at_point((0.0, 0.0)),))
        dist = deg.distance_field(grid16)
        assert dist[0, 0] == 0.0
        assert dist[grid16.N // 2, grid16.N // 2] == pytest.approx(np.sqrt(0.5))
        # periodic wrap: the point (1-h, 0) is one spacing away
        assert dist[-1, 0] == pytest.approx(grid16.spacing)


class TestGeometrySetup:
    def test_build_computes_constant(self, grid16):
        theta = ThetaSpec(grid16, np.diag([0.5, 0.5]))
        setup = GeometrySetup.build(grid16, theta, beta=0.5)
        assert setup.c_beta == pytest.approx(1.5, abs=1e-14)

    def test_subsolution_enforced(self, grid16):
        beta = 0.05
        amp = 0.5 * 4 / (2 * np.pi) ** 2
        psi = potential_from_modes(grid16, [CosineMode((1, 0), -amp)])
        theta = ThetaSpec(grid16, np.diag([3.0, 0.1]), psi)
        with pytest.raises(ValidationError):
            GeometrySetup.build(grid16, theta, beta=beta, require_subsolution=True)
