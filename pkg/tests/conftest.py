"""Shared fixtures for the test suite."""

import os
import sys

import numpy as np
import pytest

# Add the repository root to the path so we can import our modules
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from models.aoa_beam_training import NoiseConfig, train_beamformers  # noqa: E402
from models.array_channel import AngleLaw, RicianConfig, SystemDims, generate_channels  # noqa: E402

NOISELESS = NoiseConfig(sigma2_bs=0.0, sigma2_ms=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_dims():
    return SystemDims(M=64, P=8, N=4)


def make_link(dims, kappa, rng, noise=NOISELESS):
    """Grid-law channels plus beams trained on them."""
    channels = generate_channels(dims, RicianConfig(kappa=kappa), rng, rng, law=AngleLaw.GRID)
    beams = train_beamformers(channels, dims, noise, rng)
    return channels, beams


@pytest.fixture
def link_factory():
    return make_link
