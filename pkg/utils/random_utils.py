"""
Utility functions for seeded random streams and unit conversions.
"""

import logging

import numpy as np

logger = logging.getLogger(__name__)

# Stable numeric tags; new tags must be appended so existing streams never move.
STREAM_TAGS = {
    "angles": 1,
    "scattering": 2,
    "training": 3,
    "pilots": 4,
    "impairments": 5,
    "csi": 6,
    "power_loss": 7,
}


def trial_stream(seed, trial, tag):
    """
    Build the random stream owned by one trial and one module.

    Args:
        seed (int): The 64-bit scenario seed.
        trial (int): The trial index.
        tag (str): One of ``STREAM_TAGS``.

    Returns:
        numpy.random.Generator: A generator independent of every other
        (trial, tag) pair.
    """
    try:
        tag_id = STREAM_TAGS[tag]
    except KeyError:
        raise ValueError(f"Unknown stream tag: {tag}") from None
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trial), tag_id))
    return np.random.default_rng(sequence)


def complex_normal(rng, shape, variance=1.0):
    """
    Draw circularly symmetric complex Gaussian samples CN(0, variance).

    Real and imaginary parts are independent with variance ``variance / 2``.
    """
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def db_to_linear(value_db):
    """Convert a power ratio from dB to linear scale."""
    linear = 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)
    return float(linear) if linear.ndim == 0 else linear
