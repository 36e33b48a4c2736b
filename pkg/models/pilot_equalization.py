"""
Uplink orthogonal pilots and least-squares estimation of the equivalent channel.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import dft, hadamard

from utils.errors import InvalidArgumentError
from utils.random_utils import complex_normal

logger = logging.getLogger(__name__)


class PilotFamily(str, Enum):
    DFT = "dft"
    HADAMARD = "hadamard"


@dataclass(frozen=True)
class PilotMatrix:
    """N x N pilot matrix; column i is user i's pilot sequence scaled by sqrt(E_P)."""

    psi: np.ndarray
    pilot_energy: float

    @property
    def N(self):
        return self.psi.shape[0]


@dataclass(frozen=True)
class EquivalentChannel:
    """
    N x N baseband channel seen through both analog beamformers.

    Column k of ``h_eq`` is user k's equivalent channel, so row k of
    ``h_eq.T`` is omega_k^H H_k^T F_RF.
    """

    h_eq: np.ndarray
    is_estimate: bool
    source_dims: Optional[Tuple[int, int, int]] = None

    @property
    def downlink(self):
        """Rows indexed by user: the matrix each user's received signal is drawn from."""
        return self.h_eq.T


def generate_orthogonal_pilots(N, pilot_energy, family=PilotFamily.DFT):
    """
    Build an orthogonal pilot matrix with psi^H psi = E_P I.

    Args:
        N (int): Number of users (and pilot length).
        pilot_energy (float): Pilot energy E_P.
        family (PilotFamily): DFT columns, or Hadamard when N is a power of two.

    Returns:
        PilotMatrix: The pilots.
    """
    if N < 1:
        raise InvalidArgumentError(f"N must be positive, got {N}")
    if not pilot_energy > 0:
        raise InvalidArgumentError(f"Pilot energy must be positive, got {pilot_energy}")

    family = PilotFamily(family)
    if family == PilotFamily.HADAMARD:
        if N & (N - 1):
            raise InvalidArgumentError(f"Hadamard pilots need a power-of-two N, got {N}")
        unitary = hadamard(N).astype(complex) / np.sqrt(N)
    else:
        unitary = dft(N, scale="sqrtn")
    return PilotMatrix(psi=np.sqrt(pilot_energy) * unitary, pilot_energy=float(pilot_energy))


def _user_transmit_vectors(channels, user_beams):
    # Column i: H_i times the conjugated beam user i transmits with.
    return np.column_stack(
        [channel.H @ user_beams[:, i].conj() for i, channel in enumerate(channels)]
    )


def receive_pilots(bs_beams, user_signals, pilots, sigma2_bs, rng):
    """
    Pass pilots through the array and the RF-chain combiners.

    Args:
        bs_beams (np.ndarray): M x N combiners, one column per RF chain.
        user_signals (np.ndarray): M x N, column i is user i's effective array channel.
        pilots (PilotMatrix): The pilots.
        sigma2_bs (float): Per-antenna noise power.
        rng (numpy.random.Generator): Stream for the antenna noise.

    Returns:
        np.ndarray: N x N matrix S, column k holding RF chain k's N samples.
    """
    n_antennas = user_signals.shape[0]
    noise = complex_normal(rng, (n_antennas, pilots.N), sigma2_bs)
    array_samples = user_signals @ pilots.psi.T + noise
    return (bs_beams.T @ array_samples).T


def uplink_pilot_reception(channels, beams, pilots, noise, rng):
    """Received pilot matrix S for the trained beams (see ``receive_pilots``)."""
    if len(channels) != pilots.N:
        raise InvalidArgumentError(f"{len(channels)} channels for {pilots.N} pilots")
    user_signals = _user_transmit_vectors(channels, beams.Q_RF)
    return receive_pilots(beams.F_RF, user_signals, pilots, noise.sigma2_bs, rng)


def ls_estimate(S, pilots, source_dims=None):
    """
    Least-squares estimate of the equivalent channel from received pilots.

    Computes H_eq^T = (1/E_P) psi^H S, which is exact without noise because
    psi^H psi = E_P I.
    """
    if not pilots.pilot_energy > 0:
        raise InvalidArgumentError(
            f"Pilot energy must be positive, got {pilots.pilot_energy}"
        )
    h_eq_t = pilots.psi.conj().T @ np.asarray(S) / pilots.pilot_energy
    return EquivalentChannel(h_eq=h_eq_t.T, is_estimate=True, source_dims=source_dims)


def true_equivalent_channel(channels, beams):
    """Noise-free equivalent channel: row k of the downlink view is omega_k^H H_k^T F_RF."""
    rows = [
        beams.Q_RF[:, k].conj() @ channel.H.T @ beams.F_RF
        for k, channel in enumerate(channels)
    ]
    M, P = channels[0].H.shape
    return EquivalentChannel(
        h_eq=np.vstack(rows).T, is_estimate=False, source_dims=(M, P, len(channels))
    )


def normalized_mse(estimate, truth, dims, per_user=False):
    """
    Normalized estimation error (1/N) ||(h_hat_k - h_k) / sqrt(MP)||^2.

    Args:
        estimate (EquivalentChannel): The estimate.
        truth (EquivalentChannel): The true channel.
        dims (SystemDims): Supplies M and P for the normalization.
        per_user (bool): Return one value per user instead of the user average.

    Returns:
        float or np.ndarray: The normalized MSE.
    """
    if estimate.h_eq.shape != truth.h_eq.shape:
        raise InvalidArgumentError(
            f"Shape mismatch: {estimate.h_eq.shape} vs {truth.h_eq.shape}"
        )
    error = (estimate.h_eq - truth.h_eq) / np.sqrt(dims.M * dims.P)
    n = error.shape[0]
    per_user_mse = np.sum(np.abs(error) ** 2, axis=0) / n
    if per_user:
        return per_user_mse
    return float(np.mean(per_user_mse))


def closed_form_mse(sigma2_bs, pilot_energy, M, P):
    """Expected normalized LS error sigma^2 / (E_P M P)."""
    if not (pilot_energy > 0 and M > 0 and P > 0):
        raise InvalidArgumentError("pilot_energy, M and P must be positive")
    return sigma2_bs / (pilot_energy * M * P)
