"""Energy functionals: frozen values, path-independence oracles, identities."""

import numpy as np
import pytest

from jflowlab import functionals
from jflowlab.errors import PositivityError
from jflowlab.geometry import (CosineMode, GeometrySetup, Grid,
                               PotentialField, ThetaSpec, omega_phi,
                               potential_from_modes, random_bandlimited,
                               zero_potential)

from conftest import make_psh


@pytest.fixture
def theta16(grid16):
    psi = potential_from_modes(grid16, [CosineMode((1, 0), 0.1 / np.pi ** 2)])
    return ThetaSpec(grid16, np.diag([0.6, 0.4]), psi)


class TestAubinI:
    def test_zero(self, grid16):
        assert functionals.aubin_I(zero_potential(grid16)) == 0.0

    def test_constant(self, grid16):
        # All mixed volume densities average to one, so I(C) = C here.
        for c in (-1.5, 2.0):
            phi = PotentialField(grid16, np.full(grid16.shape, c))
            assert functionals.aubin_I(phi) == pytest.approx(c, abs=1e-13)

    def test_path_integral_oracle(self, grid16, rng):
        for _ in range(5):
            phi = make_psh(grid16, rng)
            closed = functionals.aubin_I(phi)
            path = functionals.path_integral_I(phi, nodes=64)
            assert closed == pytest.approx(path, abs=1e-6)

    def test_rejects_non_psh(self, grid16):
        phi = potential_from_modes(grid16, [CosineMode((1, 0), 1.5 / np.pi ** 2)])
        with pytest.raises(PositivityError):
            functionals.aubin_I(phi)


class TestAubinJ:
    def test_zero_and_constant(self, grid16):
        assert functionals.aubin_J(zero_potential(grid16)) == 0.0
        phi = PotentialField(grid16, np.full(grid16.shape, 4.2))
        assert functionals.aubin_J(phi) == pytest.approx(0.0, abs=1e-13)

    def test_nonnegative_on_psh(self, grid16, rng):
        for _ in range(20):
            phi = make_psh(grid16, rng)
            assert functionals.aubin_J(phi) >= -1e-12

    def test_path_integral_oracle(self, grid16, rng):
        for _ in range(5):
            phi = make_psh(grid16, rng)
            closed = functionals.aubin_J(phi)
            path = functionals.path_integral_J(phi, nodes=64)
            assert closed == pytest.approx(path, abs=1e-6)


class TestTwistedJ:
    def test_zero(self, grid16, theta16):
        assert functionals.twisted_J(zero_potential(grid16), theta16, 0.5) == 0.0

    def test_translation_invariance(self, grid16, theta16, rng):
        phi = make_psh(grid16, rng)
        base = functionals.twisted_J(phi, theta16, 0.5)
        shifted = functionals.twisted_J(phi.shifted(5.0), theta16, 0.5)
        assert shifted == pytest.approx(base, abs=1e-10)

    def test_constant_is_zero(self, grid16, theta16):
        phi = PotentialField(grid16, np.full(grid16.shape, 5.0))
        assert functionals.twisted_J(phi, theta16, 0.5) == pytest.approx(0.0, abs=1e-12)

    def test_path_integral_oracle(self, grid16, theta16, rng):
        for beta in (0.0, 0.5):
            phi = make_psh(grid16, rng)
            closed = functionals.twisted_J(phi, theta16, beta)
            path = functionals.path_integral_twisted(phi, theta16, beta, nodes=64)
            assert closed == pytest.approx(path, abs=1e-6)

    def test_zero_class_twist_vanishes(self, grid16, rng):
        # The pluripotential part of the flat-torus K-energy is the twisted
        # functional of a zero form, identically zero.
        spec = ThetaSpec(grid16, np.zeros((2, 2)))
        for _ in range(3):
            phi = make_psh(grid16, rng)
            assert functionals.twisted_J(phi, spec, 0.0) == pytest.approx(0.0, abs=1e-14)

    def test_n3_path_oracle(self):
        grid = Grid(3, 8)
        rng = np.random.default_rng(3)
        phi = make_psh(grid, rng, amplitude=0.002, max_mode=1)
        theta = ThetaSpec(grid, 0.5 * np.eye(3))
        closed = functionals.twisted_J(phi, theta, 0.25)
        path = functionals.path_integral_twisted(phi, theta, 0.25, nodes=64)
        assert closed == pytest.approx(path, abs=1e-6)
        assert functionals.aubin_I(phi) == pytest.approx(
            functionals.path_integral_I(phi, nodes=64), abs=1e-6)


class TestEntropy:
    def test_zero(self, grid16):
        assert functionals.mabuchi_entropy(zero_potential(grid16)) == 0.0

    def test_positive_off_flat(self, grid16):
        phi = potential_from_modes(grid16, [CosineMode((1, 0), 0.02)])
        assert functionals.mabuchi_entropy(phi) > 0.0

    def test_translation_invariance(self, grid16, rng):
        phi = make_psh(grid16, rng)
        a = functionals.mabuchi_entropy(phi)
        b = functionals.mabuchi_entropy(phi.shifted(-3.0))
        assert a == pytest.approx(b, abs=1e-12)

    def test_rejects_degenerate_metric(self, grid16):
        phi = potential_from_modes(grid16, [CosineMode((1, 0), 1.0 / np.pi ** 2)])
        with pytest.raises(PositivityError):
            functionals.mabuchi_entropy(phi)


class TestSandwich:
    def test_random_psh(self, grid16, rng):
        # The comparability inequality uses the classical (shift-invariant)
        # functional, not the flow-conserved primitive.
        n = grid16.n
        for _ in range(100):
            phi = make_psh(grid16, rng)
            I = functionals.aubin_I_classical(phi)
            J = functionals.aubin_J(phi)
            assert J / n - 1e-9 <= I - J <= n * J + 1e-9

    def test_classical_shift_invariant_and_nonnegative(self, grid16, rng):
        phi = make_psh(grid16, rng)
        a = functionals.aubin_I_classical(phi)
        b = functionals.aubin_I_classical(phi.shifted(-2.0))
        assert a == pytest.approx(b, abs=1e-12)
        assert a >= -1e-12
        assert functionals.aubin_J(phi) >= -1e-12


class TestGradientIdentity:
    def test_directional_derivative(self, grid32, rng):
        # N=32 keeps every integrand product band-limited below the Nyquist
        # mode, so the discrete identity is exact up to FD truncation.
        beta = 0.5
        psi = potential_from_modes(grid32, [CosineMode((1, 0), 0.1 / np.pi ** 2)])
        theta = ThetaSpec(grid32, np.diag([0.6, 0.4]), psi)
        setup = GeometrySetup.build(grid32, theta, beta=beta)
        # The functional is cubic along phi + s v, so the central-difference
        # truncation scales with s^2 det(H[v]); keep v at unit scale.
        s = 2e-5
        for _ in range(10):
            phi = make_psh(grid32, rng)
            v = random_bandlimited(grid32, rng, max_mode=2, amplitude=0.1)
            plus = functionals.twisted_J(
                PotentialField(grid32, phi.values + s * v.values), theta, beta)
            minus = functionals.twisted_J(
                PotentialField(grid32, phi.values - s * v.values), theta, beta)
            fd = (plus - minus) / (2 * s)
            pairing = functionals.gradient_pairing(phi, v, theta, beta, setup.c_beta)
            assert fd == pytest.approx(pairing, rel=1e-4)


class TestReport:
    def test_evaluate_consistency(self, grid16, theta16, rng):
        phi = make_psh(grid16, rng)
        report = functionals.evaluate(phi, theta16, 0.5)
        assert report.I == pytest.approx(functionals.aubin_I(phi), abs=1e-14)
        assert report.J == pytest.approx(functionals.aubin_J(phi), abs=1e-14)
        assert report.J_twisted == pytest.approx(
            functionals.twisted_J(phi, theta16, 0.5), abs=1e-14)
        assert report.entropy == pytest.approx(
            functionals.mabuchi_entropy(phi), abs=1e-14)
        assert report.theta_bar == pytest.approx(1.0, abs=1e-14)
