"""Tests for orthogonal pilots and LS estimation of the equivalent channel."""

import numpy as np
import pytest

from models.aoa_beam_training import NoiseConfig
from models.array_channel import SystemDims
from models.pilot_equalization import (
    PilotFamily,
    closed_form_mse,
    generate_orthogonal_pilots,
    ls_estimate,
    normalized_mse,
    true_equivalent_channel,
    uplink_pilot_reception,
)
from utils.errors import InvalidArgumentError


@pytest.mark.parametrize("family", list(PilotFamily))
def test_pilots_are_orthogonal_with_energy(family):
    pilots = generate_orthogonal_pilots(4, 10.0, family)
    assert pilots.N == 4
    np.testing.assert_allclose(pilots.psi.conj().T @ pilots.psi, 10.0 * np.eye(4), atol=1e-12)


def test_hadamard_pilots_need_power_of_two():
    with pytest.raises(InvalidArgumentError):
        generate_orthogonal_pilots(6, 1.0, PilotFamily.HADAMARD)


@pytest.mark.parametrize("energy", [0.0, -1.0])
def test_pilot_energy_must_be_positive(energy):
    with pytest.raises(InvalidArgumentError):
        generate_orthogonal_pilots(4, energy)


def test_noiseless_pilots_recover_equivalent_channel_exactly(rng, small_dims, link_factory):
    pilots = generate_orthogonal_pilots(small_dims.N, 10.0)
    for _ in range(20):
        channels, beams = link_factory(small_dims, 2.0, rng)
        received = uplink_pilot_reception(channels, beams, pilots, NoiseConfig(sigma2_bs=0.0), rng)
        estimate = ls_estimate(received, pilots)
        truth = true_equivalent_channel(channels, beams)
        error = np.linalg.norm(estimate.h_eq - truth.h_eq) / np.linalg.norm(truth.h_eq)
        assert error < 1e-10
        assert estimate.is_estimate and not truth.is_estimate


def test_equivalent_channel_orientation(rng, small_dims, link_factory):
    channels, beams = link_factory(small_dims, 2.0, rng)
    truth = true_equivalent_channel(channels, beams)
    k = 2
    row = beams.Q_RF[:, k].conj() @ channels[k].H.T @ beams.F_RF
    np.testing.assert_allclose(truth.downlink[k], row)
    np.testing.assert_allclose(truth.h_eq[:, k], row)
    assert truth.source_dims == (small_dims.M, small_dims.P, small_dims.N)


def test_empirical_mse_matches_closed_form(rng, small_dims, link_factory):
    pilots = generate_orthogonal_pilots(small_dims.N, 10.0)
    channels, beams = link_factory(small_dims, 2.0, rng)
    truth = true_equivalent_channel(channels, beams)
    mse = np.mean(
        [
            normalized_mse(
                ls_estimate(uplink_pilot_reception(channels, beams, pilots, NoiseConfig(), rng), pilots),
                truth,
                small_dims,
            )
            for _ in range(400)
        ]
    )
    expected = closed_form_mse(1.0, 10.0, small_dims.M, small_dims.P)
    assert mse == pytest.approx(expected, rel=0.05)


def test_closed_form_mse_value():
    assert closed_form_mse(1.0, 10.0, 100, 16) == pytest.approx(6.25e-5)
    with pytest.raises(InvalidArgumentError):
        closed_form_mse(1.0, 0.0, 100, 16)


def test_normalized_mse_per_user_and_shape_checks(rng, small_dims, link_factory):
    channels, beams = link_factory(small_dims, 2.0, rng)
    truth = true_equivalent_channel(channels, beams)
    assert normalized_mse(truth, truth, small_dims) == 0.0
    assert normalized_mse(truth, truth, small_dims, per_user=True).shape == (small_dims.N,)

    smaller = SystemDims(M=64, P=8, N=2)
    other, other_beams = link_factory(smaller, 2.0, rng)
    with pytest.raises(InvalidArgumentError):
        normalized_mse(true_equivalent_channel(other, other_beams), truth, small_dims)


def test_uplink_checks_pilot_count(rng, small_dims, link_factory):
    channels, beams = link_factory(small_dims, 2.0, rng)
    with pytest.raises(InvalidArgumentError):
        uplink_pilot_reception(channels, beams, generate_orthogonal_pilots(2, 1.0), NoiseConfig(), rng)
