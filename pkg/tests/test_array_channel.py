"""Tests for array geometry and the Rician channel model."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from models.array_channel import (
    AngleLaw,
    RicianConfig,
    ScatteringMode,
    SystemDims,
    assemble_channel,
    default_grid_size,
    draw_user_angles,
    generate_channels,
    grid_angles,
    los_channel,
    rician_weights,
    scattering_channel,
    steering_matrix,
    steering_vector,
    wrapped_cos_distance,
)
from utils.errors import InvalidArgumentError


def test_steering_vector_is_unit_modulus_ramp():
    vec = steering_vector(math.pi / 3, 16)
    assert vec.shape == (16,)
    assert vec[0] == 1
    np.testing.assert_allclose(np.abs(vec), 1.0)
    # cos(pi/3) = 0.5, so consecutive elements rotate by -pi/2
    np.testing.assert_allclose(vec[1] / vec[0], np.exp(-0.5j * np.pi))


def test_broadside_steering_vector_is_all_ones():
    np.testing.assert_allclose(steering_vector(math.pi / 2, 8), np.ones(8), atol=1e-12)


@pytest.mark.parametrize("angle", [-0.1, math.pi + 0.1, float("nan")])
def test_steering_vector_rejects_bad_angles(angle):
    with pytest.raises(InvalidArgumentError):
        steering_vector(angle, 8)


def test_los_channel_is_rank_one_with_full_power():
    dims = SystemDims(M=32, P=8, N=2)
    los = los_channel(0.7, 2.1, dims)
    assert los.shape == (32, 8)
    assert np.linalg.matrix_rank(los) == 1
    assert np.linalg.norm(los) ** 2 == pytest.approx(32 * 8)


def test_system_dims_defaults_rf_chains_to_users():
    dims = SystemDims(M=16, P=4, N=3)
    assert dims.N_RF == 3
    assert dims.spacing_ratio == 0.5


@pytest.mark.parametrize("sizes", [dict(M=2, P=4, N=3), dict(M=8, P=4, N=3, N_RF=2)])
def test_system_dims_rejects_too_few_antennas_or_chains(sizes):
    with pytest.raises(ValidationError):
        SystemDims(**sizes)


def test_rician_weights_split_unit_power():
    los_w, scatter_w = rician_weights(2.0)
    assert los_w**2 + scatter_w**2 == pytest.approx(1.0)
    assert los_w**2 == pytest.approx(2.0 / 3.0)
    assert rician_weights(float("inf")) == (1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        rician_weights(-1.0)


def test_assemble_channel_extremes_return_exact_parts(rng):
    los = rng.standard_normal((4, 2)) + 0j
    scatter = rng.standard_normal((4, 2)) + 0j
    assert np.array_equal(assemble_channel(los, scatter, float("inf")).H, los)
    assert np.array_equal(assemble_channel(los, scatter, 0.0).H, scatter)
    with pytest.raises(InvalidArgumentError):
        assemble_channel(los, scatter[:2], 1.0)


def test_iid_scattering_has_unit_entry_power(rng):
    dims = SystemDims(M=64, P=8, N=1)
    cfg = RicianConfig()
    power = np.mean([np.mean(np.abs(scattering_channel(rng, dims, cfg)) ** 2) for _ in range(50)])
    assert power == pytest.approx(1.0, abs=0.05)


def test_clustered_scattering_rank_is_bounded_by_paths(rng):
    dims = SystemDims(M=32, P=8, N=1)
    cfg = RicianConfig(
        scattering_mode=ScatteringMode.CLUSTERED, n_clusters=2, paths_per_cluster=(2, 1)
    )
    scatter = scattering_channel(rng, dims, cfg)
    assert scatter.shape == (32, 8)
    assert np.linalg.matrix_rank(scatter) <= 3


def test_clustered_config_needs_one_count_per_cluster():
    with pytest.raises(ValidationError):
        RicianConfig(scattering_mode="clustered", n_clusters=3, paths_per_cluster=(1, 1))


def test_default_grid_size():
    assert default_grid_size(100) == 113
    assert default_grid_size(1) == 2


def test_wrapped_cos_distance_wraps_at_array_period():
    assert wrapped_cos_distance(0.0, math.pi) == pytest.approx(0.0, abs=1e-12)
    assert wrapped_cos_distance(math.pi / 2, math.pi / 3) == pytest.approx(0.5)


def test_continuous_angles_respect_min_separation(rng):
    min_sep = 2 * 1.782 / 100
    angles = draw_user_angles(rng, 8, 100, min_separation=min_sep)
    assert np.all((angles >= 0) & (angles <= math.pi))
    for i in range(len(angles)):
        for j in range(i + 1, len(angles)):
            assert wrapped_cos_distance(angles[i], angles[j]) >= min_sep


def test_grid_angles_land_on_grid(rng):
    J = default_grid_size(64)
    angles = draw_user_angles(rng, 6, 64, law=AngleLaw.GRID, min_separation=0.05)
    grid = grid_angles(J)
    assert all(np.any(np.isclose(grid, a, rtol=0, atol=1e-15)) for a in angles)
    assert len(set(angles)) == 6


def test_grid_law_rejects_more_users_than_grid_points(rng):
    with pytest.raises(InvalidArgumentError):
        draw_user_angles(rng, 5, 2, law=AngleLaw.GRID, grid_size=4)


def test_generate_channels_is_deterministic(small_dims):
    cfg = RicianConfig(kappa=2.0)

    def draw():
        return generate_channels(
            small_dims, cfg, np.random.default_rng(7), np.random.default_rng(8), law=AngleLaw.GRID
        )

    first, second = draw(), draw()
    assert len(first) == small_dims.N
    for a, b in zip(first, second):
        assert a.H.shape == (small_dims.M, small_dims.P)
        assert np.array_equal(a.H, b.H)
        assert a.theta == b.theta and a.phi == b.phi


def test_endfire_steering_vector_alternates_sign():
    np.testing.assert_allclose(steering_vector(0.0, 4), [1, -1, 1, -1], atol=1e-12)


def test_beam_gram_approaches_identity_as_array_grows():
    angles = np.arccos([0.5, 0.0, -0.6])
    # Dirichlet kernel bound: |off-diagonal| <= 1 / (M sin(pi d |du|))
    min_sin = np.sin(np.pi * 0.5 * 0.5)
    largest = {}
    for M in (16, 64, 256):
        f_rf = steering_matrix(angles, M).conj() / np.sqrt(M)
        gram = f_rf.conj().T @ f_rf
        np.testing.assert_allclose(np.diag(gram), 1.0)
        largest[M] = np.max(np.abs(gram - np.diag(np.diag(gram))))
        assert largest[M] <= 1.0 / (M * min_sin) + 1e-12
    assert largest[64] < largest[16]
    assert largest[256] < largest[16]


def test_clustered_scattering_has_unit_average_power(rng):
    dims = SystemDims(M=32, P=8, N=1)
    cfg = RicianConfig(
        scattering_mode=ScatteringMode.CLUSTERED, n_clusters=2, paths_per_cluster=(2, 1)
    )
    power = np.mean(
        [np.linalg.norm(scattering_channel(rng, dims, cfg)) ** 2 for _ in range(4000)]
    )
    assert power / (dims.M * dims.P) == pytest.approx(1.0, abs=0.05)


def test_rician_channel_power_matches_array_size(rng):
    dims = SystemDims(M=32, P=8, N=1)
    cfg = RicianConfig(kappa=2.0)
    powers = []
    for _ in range(2000):
        theta, phi = rng.uniform(0.0, math.pi, 2)
        channel = assemble_channel(
            los_channel(theta, phi, dims), scattering_channel(rng, dims, cfg), 2.0
        )
        powers.append(np.linalg.norm(channel.H) ** 2)
    assert np.mean(powers) == pytest.approx(dims.M * dims.P, rel=0.02)


def test_last_user_placed_on_final_attempt_is_kept(rng, monkeypatch):
    monkeypatch.setattr("models.array_channel.MAX_PLACEMENT_ATTEMPTS", 3)
    angles = draw_user_angles(rng, 3, 64, min_separation=0.0)
    assert angles.shape == (3,)
    with pytest.raises(InvalidArgumentError):
        draw_user_angles(rng, 4, 64, min_separation=0.0)
