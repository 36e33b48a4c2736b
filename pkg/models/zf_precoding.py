"""
Zero-forcing baseband precoding, downlink SINR, and closed-form rate bounds.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from models.array_channel import rician_weights
from utils.errors import InvalidArgumentError, PrecodingSingularError

logger = logging.getLogger(__name__)

DEFAULT_CONDITION_CAP = 1e8


@dataclass(frozen=True)
class ZfPrecoder:
    """ZF precoder W (columns per user) and its power normalization beta."""

    W: np.ndarray
    beta: float


@dataclass(frozen=True)
class RateResult:
    per_user_rate: np.ndarray
    mean_rate: float
    snr: float
    label: str = ""


@dataclass(frozen=True)
class FullyDigitalRates:
    """Fully digital ZF baseline: simulated rate, its upper bound, and the large-M limit."""

    simulated: float
    upper: float
    asymptotic: float


def _as_matrix(h_eq):
    return np.asarray(getattr(h_eq, "h_eq", h_eq))


def checked_inverse(gram, condition_cap=DEFAULT_CONDITION_CAP):
    """
    Invert a Gram matrix, refusing ill-conditioned ones.

    Raises:
        PrecodingSingularError: If cond(gram) is not finite or exceeds the cap.
    """
    condition = np.linalg.cond(gram)
    if not np.isfinite(condition) or condition > condition_cap:
        raise PrecodingSingularError(condition, condition_cap)
    return np.linalg.inv(gram)


def zf_precoder(h_eq, condition_cap=DEFAULT_CONDITION_CAP):
    """
    Build the ZF precoder W = H^* (H^T H^*)^{-1} with beta = 1/sqrt(tr(W W^H)).

    Args:
        h_eq (np.ndarray or EquivalentChannel): The N x N equivalent channel.
        condition_cap (float): Largest accepted Gram condition number.

    Returns:
        ZfPrecoder: Precoder satisfying H^T W = I.
    """
    H = _as_matrix(h_eq)
    gram = H.T @ H.conj()
    W = H.conj() @ checked_inverse(gram, condition_cap)
    beta = 1.0 / math.sqrt(float(np.real(np.trace(W @ W.conj().T))))
    return ZfPrecoder(W=W, beta=beta)


def downlink_sinr(h_eq_true, precoder, snr):
    """
    Per-user SINR of the precoded downlink.

    SINR_k = beta^2 snr |h_k^T w_k|^2 / (beta^2 snr sum_{j != k} |h_k^T w_j|^2 + 1)

    Args:
        h_eq_true (np.ndarray or EquivalentChannel): Channel the users actually see.
        precoder (ZfPrecoder): Precoder, possibly built from an estimate.
        snr (float or np.ndarray): E_s / sigma^2_MS, linear. An array gives one row per value.

    Returns:
        np.ndarray: SINRs, shape ``(N,)`` or ``(len(snr), N)``.
    """
    H = _as_matrix(h_eq_true)
    gains = np.abs(H.T @ precoder.W) ** 2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    snr = np.asarray(snr, dtype=float)
    scaled = precoder.beta**2 * (snr[..., None] if snr.ndim else snr)
    return scaled * signal / (scaled * interference + 1.0)


def simulated_rate(sinr, snr=float("nan"), label=""):
    """
    Aggregate SINRs into rates log2(1 + SINR).

    ``sinr`` may be one value per user or a (trials x users) array; the
    per-user rate averages over trials and the mean rate over everything.
    """
    sinr = np.asarray(sinr, dtype=float)
    if not np.all(np.isfinite(sinr)) or np.any(sinr < 0):
        raise InvalidArgumentError("SINR values must be finite and nonnegative")
    rates = np.log2(1.0 + sinr)
    per_user = rates.mean(axis=0) if rates.ndim > 1 else rates
    return RateResult(
        per_user_rate=per_user, mean_rate=float(rates.mean()), snr=float(snr), label=label
    )


def _check_snr(snr):
    if np.any(np.asarray(snr) < 0):
        raise InvalidArgumentError(f"snr must be nonnegative, got {snr}")


def _scalar_or_array(value):
    value = np.asarray(value, dtype=float)
    return float(value) if value.ndim == 0 else value


def hybrid_rate_upper_bound(f_rf, kappa, dims, snr):
    """Jensen upper bound on the per-user ZF rate for analog beams ``f_rf``."""
    _check_snr(snr)
    los_w, scatter_w = rician_weights(kappa)
    f_rf = np.asarray(f_rf)
    gram_norm = np.linalg.norm(f_rf.conj().T @ f_rf, "fro") ** 2
    n = dims.N
    gain = los_w**2 * dims.M * dims.P * gram_norm + scatter_w**2 * n**2
    return _scalar_or_array(np.log2(1.0 + gain * np.asarray(snr, dtype=float) / n**2))


def asymptotic_hybrid_rate(kappa, dims, snr):
    """Upper bound for orthonormal analog beams: log2(1 + [w_L^2 MP/N + w_S^2] snr)."""
    _check_snr(snr)
    los_w, scatter_w = rician_weights(kappa)
    gain = los_w**2 * dims.M * dims.P / dims.N + scatter_w**2
    return _scalar_or_array(np.log2(1.0 + gain * np.asarray(snr, dtype=float)))


def fully_digital_bounds(channels, dims, snr, condition_cap=DEFAULT_CONDITION_CAP):
    """
    Rates of a fully digital ZF system with perfect CSI.

    Each user's BS-side row is the effective array response of its first
    antenna (LOS plus scattering), and every user combines its P antennas
    coherently.

    Args:
        channels (list[ChannelRealization]): One channel per user.
        dims (SystemDims): System sizes.
        snr (float or np.ndarray): Linear SNR.
        condition_cap (float): Largest accepted Gram condition number.

    Returns:
        FullyDigitalRates: Simulated, upper-bound and asymptotic rates.
    """
    _check_snr(snr)
    snr = np.asarray(snr, dtype=float)
    rows = np.vstack([channel.H[:, 0] for channel in channels])
    gram_inv = checked_inverse(rows @ rows.conj().T, condition_cap)
    power_trace = float(np.real(np.trace(gram_inv)))
    n = dims.N
    simulated = np.log2(1.0 + dims.P * snr / power_trace)
    upper = np.log2(1.0 + dims.P * np.linalg.norm(rows, "fro") ** 2 * snr / n**2)
    asymptotic = np.log2(1.0 + dims.M * dims.P * snr / n)
    return FullyDigitalRates(
        simulated=_scalar_or_array(simulated),
        upper=_scalar_or_array(upper),
        asymptotic=_scalar_or_array(asymptotic),
    )


def corollary3_gap(kappa):
    """Gap log2(kappa/(kappa+1)) between the hybrid and fully digital bounds."""
    if np.isnan(kappa) or kappa <= 0:
        raise InvalidArgumentError(f"kappa must be positive, got {kappa}")
    if np.isinf(kappa):
        return 0.0
    return math.log2(kappa / (kappa + 1.0))
