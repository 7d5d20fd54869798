"""Shared fixtures: reference geometry, a tiny grid for brute-force oracles."""

import numpy as np
import pytest

from ddlink.channel import DDTaps
from ddlink.frames import make_config, psk_constellation


@pytest.fixture(scope="session")
def cfg():
    """Reference geometry: 13 delay bins, 16 Doppler bins, 30 kHz spacing."""
    return make_config(13, 16, 30e3, 2.4e9)


@pytest.fixture(scope="session")
def small_cfg():
    """Brute-force-friendly grid (MN = 12); N is a power of two for OTSM."""
    return make_config(3, 4, 30e3, 2.4e9)


@pytest.fixture(scope="session")
def qpsk():
    return psk_constellation(4)


@pytest.fixture
def random_taps():
    """Factory for dense random taps filling a support box, energy ~ 1/2."""

    def make(rng, mask, scale=1.0):
        shape = (mask.k_max + 1, 2 * mask.l_max + 1)
        values = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        return DDTaps(mask.k_max, mask.l_max,
                      scale * values / np.sqrt(2.0 * values.size))

    return make
