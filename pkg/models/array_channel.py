"""
Uniform linear array geometry and the Rician multi-user channel model.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from utils.errors import InvalidArgumentError
from utils.random_utils import complex_normal

logger = logging.getLogger(__name__)

# Half-power beamwidth of an n-element half-wavelength ULA is about HPBW_FACTOR / n.
HPBW_FACTOR = 1.782

MAX_PLACEMENT_ATTEMPTS = 10_000


class ScatteringMode(str, Enum):
    IID_GAUSSIAN = "iid"
    CLUSTERED = "clustered"


class AngleLaw(str, Enum):
    """How LOS angles are drawn: anywhere on [0, pi] or on detection-grid points."""

    CONTINUOUS = "continuous"
    GRID = "grid"


class SystemDims(BaseModel):
    """
    Antenna, RF-chain and user counts of the hybrid system.

    ``N_RF`` defaults to ``N`` (one RF chain per served user).
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    M: int = Field(gt=0)
    P: int = Field(gt=0)
    N: int = Field(gt=0)
    N_RF: int = Field(gt=0)
    spacing_ratio: float = Field(default=0.5, gt=0)

    @model_validator(mode="before")
    @classmethod
    def _default_chains(cls, data):
        if isinstance(data, dict) and data.get("N_RF") is None and "N" in data:
            data = {**data, "N_RF": data["N"]}
        return data

    @model_validator(mode="after")
    def _check_chain_counts(self):
        if not self.M >= self.N_RF >= self.N:
            raise ValueError(
                f"need M >= N_RF >= N, got M={self.M}, N_RF={self.N_RF}, N={self.N}"
            )
        return self


class RicianConfig(BaseModel):
    """Rician factor and scattering model shared by all users."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kappa: float = Field(default=2.0, ge=0)
    scattering_mode: ScatteringMode = ScatteringMode.IID_GAUSSIAN
    n_clusters: int = Field(default=1, gt=0)
    paths_per_cluster: Tuple[int, ...] = (1,)

    @field_validator("paths_per_cluster")
    @classmethod
    def _positive_paths(cls, value):
        if any(n <= 0 for n in value):
            raise ValueError("paths per cluster must be positive")
        return value

    @model_validator(mode="after")
    def _check_clusters(self):
        if (
            self.scattering_mode == ScatteringMode.CLUSTERED
            and len(self.paths_per_cluster) != self.n_clusters
        ):
            raise ValueError(
                f"paths_per_cluster has {len(self.paths_per_cluster)} entries "
                f"for {self.n_clusters} clusters"
            )
        return self


@dataclass(frozen=True)
class ChannelRealization:
    """
    One user's M x P channel together with its ground truth.

    Attributes:
        H (np.ndarray): The composite channel.
        theta (float): BS-side LOS angle in radians.
        phi (float): User-side LOS angle in radians.
        kappa (float): Rician factor used to combine the parts.
        los (np.ndarray): The rank-one LOS part H_L.
        scatter (np.ndarray): The scattering part H_S.
    """

    H: np.ndarray
    theta: float
    phi: float
    kappa: float
    los: np.ndarray
    scatter: np.ndarray

    @property
    def n_bs(self):
        return self.H.shape[0]

    @property
    def n_ue(self):
        return self.H.shape[1]


def _check_angles(angles):
    angles = np.asarray(angles, dtype=float)
    if not np.all(np.isfinite(angles)):
        raise InvalidArgumentError(f"Angles must be finite, got {angles}")
    if np.any(angles < 0.0) or np.any(angles > np.pi):
        raise InvalidArgumentError(f"Angles must lie in [0, pi], got {angles}")
    return angles


def steering_matrix(angles, n_elems, spacing_ratio=0.5):
    """
    Stack steering vectors for several angles as columns.

    Args:
        angles (array-like): Angles in radians, each in [0, pi].
        n_elems (int): Number of array elements.
        spacing_ratio (float): Element spacing over wavelength.

    Returns:
        np.ndarray: ``n_elems x len(angles)`` complex matrix.
    """
    if n_elems < 1:
        raise InvalidArgumentError(f"n_elems must be positive, got {n_elems}")
    angles = _check_angles(np.atleast_1d(angles))
    m = np.arange(n_elems)[:, None]
    return np.exp(-2j * np.pi * m * spacing_ratio * np.cos(angles)[None, :])


def steering_vector(angle, n_elems, spacing_ratio=0.5):
    """
    ULA response to a plane wave from ``angle``.

    Element m is exp(-j 2 pi m d cos(angle)), so every element has unit modulus.
    """
    return steering_matrix([angle], n_elems, spacing_ratio)[:, 0]


def los_channel(theta, phi, dims):
    """Rank-one LOS matrix h_BS(theta) h_UE(phi)^H of size M x P."""
    h_bs = steering_vector(theta, dims.M, dims.spacing_ratio)
    h_ue = steering_vector(phi, dims.P, dims.spacing_ratio)
    return np.outer(h_bs, h_ue.conj())


def scattering_channel(rng, dims, cfg):
    """
    Draw the scattering part H_S of one user's channel.

    Args:
        rng (numpy.random.Generator): The random stream.
        dims (SystemDims): Array sizes.
        cfg (RicianConfig): Selects i.i.d. or clustered scattering.

    Returns:
        np.ndarray: M x P complex matrix with unit average entry power.
    """
    if cfg.scattering_mode == ScatteringMode.IID_GAUSSIAN:
        return complex_normal(rng, (dims.M, dims.P))

    n_paths = int(sum(cfg.paths_per_cluster))
    gains = complex_normal(rng, n_paths)
    bs_angles = rng.uniform(0.0, np.pi, n_paths)
    ue_angles = rng.uniform(0.0, np.pi, n_paths)
    a_bs = steering_matrix(bs_angles, dims.M, dims.spacing_ratio)
    a_ue = steering_matrix(ue_angles, dims.P, dims.spacing_ratio)
    return (a_bs * gains[None, :]) @ a_ue.conj().T / np.sqrt(n_paths)


def rician_weights(kappa):
    """Amplitude weights (LOS, scattering) for Rician factor ``kappa``."""
    if np.isnan(kappa) or kappa < 0:
        raise InvalidArgumentError(f"kappa must be nonnegative, got {kappa}")
    if np.isinf(kappa):
        return 1.0, 0.0
    return math.sqrt(kappa / (kappa + 1.0)), math.sqrt(1.0 / (kappa + 1.0))


def assemble_channel(los, scatter, kappa, theta=float("nan"), phi=float("nan")):
    """
    Combine LOS and scattering parts into a Rician channel.

    Args:
        los (np.ndarray): LOS matrix H_L.
        scatter (np.ndarray): Scattering matrix H_S.
        kappa (float): Rician factor, ``inf`` for pure LOS.
        theta (float): BS-side LOS angle recorded with the realization.
        phi (float): User-side LOS angle recorded with the realization.

    Returns:
        ChannelRealization: The assembled channel.
    """
    los = np.asarray(los, dtype=complex)
    scatter = np.asarray(scatter, dtype=complex)
    if los.shape != scatter.shape:
        raise InvalidArgumentError(
            f"LOS shape {los.shape} does not match scattering shape {scatter.shape}"
        )
    los_weight, scatter_weight = rician_weights(kappa)
    if scatter_weight == 0.0:
        H = los.copy()
    elif los_weight == 0.0:
        H = scatter.copy()
    else:
        H = los_weight * los + scatter_weight * scatter
    return ChannelRealization(
        H=H, theta=float(theta), phi=float(phi), kappa=float(kappa), los=los, scatter=scatter
    )


def default_grid_size(n_elems):
    """Smallest search grid that keeps adjacent beams within one HPBW: ceil(2n/1.782)."""
    return max(2, math.ceil(2 * n_elems / HPBW_FACTOR))


def grid_angles(grid_size):
    """Uniform grid angles i * pi / J for i = 0..J-1."""
    return np.arange(grid_size) * np.pi / grid_size


def wrapped_cos_distance(angle_a, angle_b, spacing_ratio=0.5):
    """Distance between cos(angle_a) and cos(angle_b) modulo the array's 1/d period."""
    period = 1.0 / spacing_ratio
    delta = np.cos(angle_a) - np.cos(angle_b)
    return np.abs((delta + period / 2.0) % period - period / 2.0)


def draw_user_angles(
    rng,
    n_users,
    n_elems,
    spacing_ratio=0.5,
    law=AngleLaw.CONTINUOUS,
    min_separation=0.0,
    grid_size=None,
):
    """
    Draw one LOS angle per user, keeping users apart in the cos domain.

    Args:
        rng (numpy.random.Generator): The random stream.
        n_users (int): Number of angles to draw.
        n_elems (int): Array size, used for the default grid.
        spacing_ratio (float): Element spacing over wavelength.
        law (AngleLaw): Continuous or on-grid angles.
        min_separation (float): Minimum wrapped distance between any two cosines.
        grid_size (int, optional): Grid size for ``AngleLaw.GRID``.

    Returns:
        np.ndarray: ``n_users`` angles in [0, pi].
    """
    law = AngleLaw(law)
    if law == AngleLaw.GRID:
        candidates = grid_angles(grid_size or default_grid_size(n_elems))
        if n_users > len(candidates):
            raise InvalidArgumentError(
                f"Cannot place {n_users} users on a grid of {len(candidates)} angles"
            )

    angles = []
    for _ in range(MAX_PLACEMENT_ATTEMPTS):
        if len(angles) == n_users:
            break
        if law == AngleLaw.GRID:
            candidate = float(candidates[rng.integers(len(candidates))])
        else:
            candidate = float(rng.uniform(0.0, np.pi))
        placed = np.asarray(angles)
        if placed.size:
            gaps = wrapped_cos_distance(candidate, placed, spacing_ratio)
            if np.any(gaps < min_separation) or (law == AngleLaw.GRID and np.any(gaps == 0.0)):
                continue
        angles.append(candidate)
    if len(angles) < n_users:
        raise InvalidArgumentError(
            f"Could not place {n_users} users with separation {min_separation}"
        )
    return np.asarray(angles)


def generate_channels(
    dims,
    cfg,
    angle_rng,
    scatter_rng,
    law=AngleLaw.CONTINUOUS,
    min_separation=None,
):
    """
    Draw the channels of all N users.

    BS-side angles are separated by ``min_separation`` (default two BS
    beamwidths); user-side angles are independent per user.

    Returns:
        list[ChannelRealization]: One realization per user.
    """
    if min_separation is None:
        min_separation = 2 * HPBW_FACTOR / dims.M
    thetas = draw_user_angles(
        angle_rng, dims.N, dims.M, dims.spacing_ratio, law, min_separation
    )
    if law == AngleLaw.GRID:
        ue_grid = grid_angles(default_grid_size(dims.P))
        phis = ue_grid[angle_rng.integers(len(ue_grid), size=dims.N)]
    else:
        phis = angle_rng.uniform(0.0, np.pi, dims.N)

    channels = []
    for k in range(dims.N):
        los = los_channel(thetas[k], phis[k], dims)
        scatter = scattering_channel(scatter_rng, dims, cfg)
        channels.append(assemble_channel(los, scatter, cfg.kappa, theta=thetas[k], phi=phis[k]))
    logger.debug(f"Generated {dims.N} channels with BS angles {np.round(thetas, 4)}")
    return channels
