import numpy as np
import pytest

from jflowlab.geometry import (Grid, PotentialField, omega_phi,
                               random_bandlimited)


@pytest.fixture
def grid16():
    return Grid(2, 16)


@pytest.fixture
def grid32():
    return Grid(2, 32)


@pytest.fixture
def rng():
    return np.random.default_rng(20240511)


def make_psh(grid, rng, amplitude=0.02, max_mode=3, floor=1e-3):
    """Random band-limited potential scaled until the metric clears `floor`."""
    phi = random_bandlimited(grid, rng, max_mode=max_mode, amplitude=amplitude)
    while omega_phi(phi).min_eig()[0] < floor:
        phi = PotentialField(grid, 0.6 * phi.values)
    return phi
