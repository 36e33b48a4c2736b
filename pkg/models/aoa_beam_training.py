"""
Strongest-AoA estimation at the BS and the users by grid search over received tones.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from models.array_channel import default_grid_size, grid_angles, steering_matrix
from utils.errors import InvalidArgumentError
from utils.random_utils import complex_normal

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectionGrid:
    """
    Candidate receive beams, one unit-norm column per grid angle.

    Attributes:
        vectors (np.ndarray): ``n_elems x J`` matrix of grid vectors.
        angles (np.ndarray): The J grid angles in radians.
    """

    vectors: np.ndarray
    angles: np.ndarray

    @property
    def J(self):
        return self.vectors.shape[1]

    @property
    def n_elems(self):
        return self.vectors.shape[0]


@dataclass(frozen=True)
class AnalogBeamformers:
    """
    Trained analog beamformers.

    Column k of ``F_RF`` is the BS grid vector chosen for user k and column k
    of ``Q_RF`` is user k's chosen grid vector; the user transmits with its
    conjugate.
    """

    F_RF: np.ndarray
    Q_RF: np.ndarray
    bs_grid_idx: Tuple[int, ...]
    ue_grid_idx: Tuple[int, ...]


class NoiseConfig(BaseModel):
    """Receiver noise powers and tone energy, all in linear power units."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma2_bs: float = Field(default=1.0, ge=0)
    sigma2_ms: float = Field(default=1.0, ge=0)
    tone_energy: float = Field(default=1.0, ge=0)
    fresh_noise_per_beam: bool = False


def build_detection_grid(J, n_elems, spacing_ratio=0.5):
    """
    Build a uniform detection grid over [0, pi).

    Args:
        J (int): Number of grid points, at least 2.
        n_elems (int): Array size the grid is built for.
        spacing_ratio (float): Element spacing over wavelength.

    Returns:
        DetectionGrid: Columns (1/sqrt(n)) exp(+j 2 pi m d cos(i pi / J)).
    """
    if J < 2:
        raise InvalidArgumentError(f"Grid size must be at least 2, got {J}")
    angles = grid_angles(J)
    vectors = steering_matrix(angles, n_elems, spacing_ratio).conj() / np.sqrt(n_elems)
    return DetectionGrid(vectors=vectors, angles=angles)


def default_grid(n_elems, spacing_ratio=0.5):
    """Detection grid with the default size ceil(2n/1.782)."""
    return build_detection_grid(default_grid_size(n_elems), n_elems, spacing_ratio)


def _project(grid, signal, noise_power, rng, fresh_noise):
    if fresh_noise:
        noise = complex_normal(rng, (signal.shape[0], grid.J), noise_power)
        return np.sum(grid.vectors * (signal[:, None] + noise), axis=0)
    noise = complex_normal(rng, signal.shape[0], noise_power)
    return grid.vectors.T @ (signal + noise)


def simulate_bs_tone_reception(channel, grid, noise, rng):
    """
    Correlate the tone received at the BS array with every grid vector.

    The tone leaves the user's first antenna, so the array sees column 0 of
    the channel matrix (LOS response plus the first scattering column).

    Returns:
        np.ndarray: J complex responses.
    """
    if grid.n_elems != channel.n_bs:
        raise InvalidArgumentError(
            f"BS grid has {grid.n_elems} elements, channel has {channel.n_bs}"
        )
    signal = channel.H[:, 0] * np.sqrt(noise.tone_energy)
    return _project(grid, signal, noise.sigma2_bs, rng, noise.fresh_noise_per_beam)


def simulate_ue_tone_reception(channel, f_col, grid, noise, rng):
    """
    Correlate the tone the BS sends back on beam ``f_col`` with every user grid vector.

    Returns:
        np.ndarray: J complex responses omega_i^H (H^T f_col sqrt(E) + z).
    """
    if grid.n_elems != channel.n_ue:
        raise InvalidArgumentError(
            f"User grid has {grid.n_elems} elements, channel has {channel.n_ue}"
        )
    signal = channel.H.T @ f_col * np.sqrt(noise.tone_energy)
    return _project(
        DetectionGrid(vectors=grid.vectors.conj(), angles=grid.angles),
        signal,
        noise.sigma2_ms,
        rng,
        noise.fresh_noise_per_beam,
    )


def select_strongest(responses):
    """Index of the largest-magnitude response; ties go to the lowest index."""
    responses = np.asarray(responses)
    if responses.size == 0:
        raise InvalidArgumentError("No responses to select from")
    if not np.all(np.isfinite(responses)):
        raise InvalidArgumentError("Responses must be finite")
    return int(np.argmax(np.abs(responses)))


def train_beamformers(channels, dims, noise, rng, bs_grid=None, ue_grid=None):
    """
    Run BS-side then user-side strongest-AoA estimation for every user.

    Args:
        channels (list[ChannelRealization]): One channel per user.
        dims (SystemDims): System sizes.
        noise (NoiseConfig): Noise powers and tone energy.
        rng (numpy.random.Generator): Stream for the receiver noise.
        bs_grid (DetectionGrid, optional): Defaults to the default M-element grid.
        ue_grid (DetectionGrid, optional): Defaults to the default P-element grid.

    Returns:
        AnalogBeamformers: The selected beams.
    """
    if len(channels) != dims.N:
        raise InvalidArgumentError(f"Expected {dims.N} channels, got {len(channels)}")
    bs_grid = bs_grid or default_grid(dims.M, dims.spacing_ratio)
    ue_grid = ue_grid or default_grid(dims.P, dims.spacing_ratio)

    bs_idx = [
        select_strongest(simulate_bs_tone_reception(channel, bs_grid, noise, rng))
        for channel in channels
    ]
    F_RF = bs_grid.vectors[:, bs_idx]

    ue_idx = [
        select_strongest(
            simulate_ue_tone_reception(channel, F_RF[:, k], ue_grid, noise, rng)
        )
        for k, channel in enumerate(channels)
    ]
    Q_RF = ue_grid.vectors[:, ue_idx]

    logger.debug(f"Selected BS grid indices {bs_idx}, user grid indices {ue_idx}")
    return AnalogBeamformers(
        F_RF=F_RF, Q_RF=Q_RF, bs_grid_idx=tuple(bs_idx), ue_grid_idx=tuple(ue_idx)
    )
