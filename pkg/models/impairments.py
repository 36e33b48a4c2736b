"""
Hardware impairments: phase errors, analog beamforming errors, and imperfect CSI.

All impairment matrices are unit-modulus diagonals. The closed forms here
describe the ZF rate under those impairments.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field
from scipy.optimize import brentq

from models.array_channel import HPBW_FACTOR, rician_weights
from models.pilot_equalization import EquivalentChannel, ls_estimate, receive_pilots
from models.zf_precoding import (
    DEFAULT_CONDITION_CAP,
    checked_inverse,
    downlink_sinr,
    zf_precoder,
)
from utils.errors import InvalidArgumentError
from utils.random_utils import complex_normal

logger = logging.getLogger(__name__)

DEFAULT_LOSS_DRAWS = 100_000


class BeamErrorForm(str, Enum):
    """
    Parameterization of the AoA error matrix.

    ``literal`` uses the exponent 2 pi m d cos(dtheta); ``offset`` uses
    2 pi m d (cos(theta + dtheta) - cos(theta)), which is the identity at
    dtheta = 0. ``calibrated`` steers every beam off by the fixed
    spatial-frequency offset (random sign) at which it keeps exactly the
    profile's power-loss coefficient.
    """

    LITERAL = "literal"
    OFFSET = "offset"
    CALIBRATED = "calibrated"


class PowerLossMode(str, Enum):
    HALF_POWER = "half_power"
    MONTE_CARLO = "monte_carlo"


class CsiErrorScale(str, Enum):
    """Variance of each injected CSI-error entry: delta2 * M * P, or delta2 itself."""

    NORMALIZED = "normalized"
    ABSOLUTE = "absolute"


def _sinc_ratio(half_width):
    # sin(a)/a with the removable singularity at 0.
    return float(np.sinc(half_width / np.pi))


class ImpairmentProfile(BaseModel):
    """
    Hardware impairment levels of one scenario.

    Attributes:
        a (float): Half-width of the user phase errors, radians.
        b (float): Half-width of the BS phase errors, radians.
        var_aoa_bs (float): BS AoA error variance, radians^2.
        var_aoa_ms (float): User AoA error variance, radians^2.
        delta2 (float): CSI error variance.
        xi (float): Power loss from BS AoA misalignment, in (0, 1].
        xi_ms (float): Power loss from user AoA misalignment, in (0, 1].
        beam_error_form (BeamErrorForm): AoA error parameterization.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    a: float = Field(default=0.0, ge=0)
    b: float = Field(default=0.0, ge=0)
    var_aoa_bs: float = Field(default=0.0, ge=0)
    var_aoa_ms: float = Field(default=0.0, ge=0)
    delta2: float = Field(default=0.0, ge=0)
    xi: float = Field(default=1.0, gt=0, le=1)
    xi_ms: float = Field(default=1.0, gt=0, le=1)
    beam_error_form: BeamErrorForm = BeamErrorForm.LITERAL

    @computed_field
    @property
    def xi_hat(self) -> float:
        """Equivalent power loss (sin a/a)^2 (sin b/b)^2 xi xi_ms."""
        return _sinc_ratio(self.a) ** 2 * _sinc_ratio(self.b) ** 2 * self.xi * self.xi_ms

    @classmethod
    def from_settings(
        cls,
        a,
        b,
        var_aoa_bs,
        var_aoa_ms,
        delta2,
        n_elems,
        loss_mode=PowerLossMode.HALF_POWER,
        beam_error_form=BeamErrorForm.LITERAL,
        rng=None,
        n_elems_ms=None,
    ):
        """
        Build a profile whose xi and xi_ms come from ``power_loss_coefficient``.

        ``n_elems_ms`` (the user array size) is needed only when
        ``var_aoa_ms`` is positive.
        """
        xi = power_loss_coefficient(var_aoa_bs, n_elems, loss_mode, rng=rng)
        xi_ms = 1.0
        if var_aoa_ms > 0:
            if n_elems_ms is None:
                raise InvalidArgumentError("n_elems_ms is required when var_aoa_ms is positive")
            xi_ms = power_loss_coefficient(var_aoa_ms, n_elems_ms, loss_mode, rng=rng)
        return cls(
            a=a,
            b=b,
            var_aoa_bs=var_aoa_bs,
            var_aoa_ms=var_aoa_ms,
            delta2=delta2,
            xi=xi,
            xi_ms=xi_ms,
            beam_error_form=beam_error_form,
        )


@dataclass(frozen=True)
class PerturbedEquivalentChannel:
    """
    Equivalent channel with CSI error.

    Attributes:
        h_eq_hat (np.ndarray): Impaired but noiseless channel.
        h_eq_tilde (np.ndarray): ``h_eq_hat`` plus the CSI error.
        gram (np.ndarray): K = h_eq_hat^T h_eq_hat^*.
        eta (np.ndarray): Diagonal of K^{-1}, NaN when K is singular.
        delta2 (float): The injected error variance.
    """

    h_eq_hat: np.ndarray
    h_eq_tilde: np.ndarray
    gram: np.ndarray
    eta: np.ndarray
    delta2: float


@dataclass(frozen=True)
class ImpairedReception:
    """Received pilots under impairments, the LS estimate, and the impaired channel itself."""

    received: np.ndarray
    estimate: EquivalentChannel
    impaired_truth: EquivalentChannel


def draw_phase_errors(rng, half_width, size):
    """Unit-modulus phase errors exp(j u), u uniform on [-half_width, half_width]."""
    if half_width < 0:
        raise InvalidArgumentError(f"half_width must be nonnegative, got {half_width}")
    return np.exp(1j * rng.uniform(-half_width, half_width, size))


def draw_phase_error_matrix(rng, half_width, size):
    """Diagonal phase-shifter error matrix."""
    return np.diag(draw_phase_errors(rng, half_width, size))


def _dirichlet_gain(phase_step, n_elems):
    # |sum_m exp(2j m x)|^2 / n^2, equal to 1 at x = 0
    phase_step = np.asarray(phase_step, dtype=float)
    numerator = np.sin(n_elems * phase_step)
    denominator = n_elems * np.sin(phase_step)
    aligned = np.abs(denominator) < 1e-12
    ratio = np.where(aligned, 1.0, numerator / np.where(aligned, 1.0, denominator))
    return ratio**2


def calibrated_phase_step(target_gain, n_elems):
    """
    Per-element phase step x at which an n-element beam keeps ``target_gain``.

    Solves (sin(n x) / (n sin x))^2 = target_gain on the main lobe 0 <= x < pi/n.
    """
    if not 0 < target_gain <= 1:
        raise InvalidArgumentError(f"target_gain must be in (0, 1], got {target_gain}")
    if n_elems < 2:
        raise InvalidArgumentError(f"n_elems must be at least 2, got {n_elems}")
    if target_gain == 1:
        return 0.0
    return brentq(
        lambda x: float(_dirichlet_gain(x, n_elems)) - target_gain, 1e-12, np.pi / n_elems
    )


def _beam_error_phases(rng, var_aoa, n_elems, spacing_ratio, form, angle, target_gain=None):
    if var_aoa < 0:
        raise InvalidArgumentError(f"var_aoa must be nonnegative, got {var_aoa}")
    m = np.arange(n_elems)
    form = BeamErrorForm(form)
    if form == BeamErrorForm.CALIBRATED:
        if target_gain is None:
            raise InvalidArgumentError("The calibrated form needs a target beam gain")
        sign = 1.0 if rng.random() < 0.5 else -1.0
        return np.exp(2j * sign * calibrated_phase_step(target_gain, n_elems) * m)

    offset = rng.normal(0.0, math.sqrt(var_aoa))
    if form == BeamErrorForm.OFFSET:
        if angle is None:
            raise InvalidArgumentError("The offset form needs the nominal beam angle")
        shift = math.cos(angle + offset) - math.cos(angle)
    else:
        shift = math.cos(offset)
    return np.exp(2j * np.pi * m * spacing_ratio * shift)


def draw_beamforming_error_matrix(
    rng,
    var_aoa,
    n_elems,
    spacing_ratio=0.5,
    form=BeamErrorForm.LITERAL,
    angle=None,
    target_gain=None,
):
    """
    Diagonal analog beamforming error matrix for one AoA error draw.

    Args:
        rng (numpy.random.Generator): The random stream.
        var_aoa (float): Variance of the real Gaussian AoA error, radians^2.
        n_elems (int): Array size.
        spacing_ratio (float): Element spacing over wavelength.
        form (BeamErrorForm): Exponent parameterization.
        angle (float, optional): Nominal beam angle, needed by the offset form.
        target_gain (float, optional): Retained beam power, needed by the calibrated form.

    Returns:
        np.ndarray: ``n_elems x n_elems`` unit-modulus diagonal matrix.
    """
    return np.diag(
        _beam_error_phases(rng, var_aoa, n_elems, spacing_ratio, form, angle, target_gain)
    )


def hpbw(n_elems):
    """Half-power beamwidth 1.782/n of an n-element ULA, radians."""
    if n_elems < 2:
        raise InvalidArgumentError(f"n_elems must be at least 2, got {n_elems}")
    return HPBW_FACTOR / n_elems


def _mean_beam_gain(var_aoa, n_elems, rng, n_draws, angle, spacing_ratio):
    offsets = rng.normal(0.0, math.sqrt(var_aoa), n_draws)
    shift = np.pi * spacing_ratio * (np.cos(angle + offsets) - np.cos(angle))
    # |gamma(theta)^H gamma(theta + dtheta)|^2 as a Dirichlet kernel
    return float(np.mean(_dirichlet_gain(shift, n_elems)))


def power_loss_coefficient(
    var_aoa,
    n_elems,
    mode=PowerLossMode.HALF_POWER,
    rng=None,
    n_draws=DEFAULT_LOSS_DRAWS,
    angle=np.pi / 2,
    spacing_ratio=0.5,
):
    """
    Average beam power retained under a Gaussian AoA error.

    Args:
        var_aoa (float): AoA error variance, radians^2.
        n_elems (int): Array size.
        mode (PowerLossMode): ``half_power`` applies the half-power rule
            (xi = 0.5 while var_aoa <= hpbw/2); ``monte_carlo`` averages the
            beam gain over ``n_draws`` error draws.
        rng (numpy.random.Generator, optional): Stream for the Monte-Carlo draws.
        n_draws (int): Number of Monte-Carlo draws.
        angle (float): Nominal beam angle for the Monte-Carlo estimate.
        spacing_ratio (float): Element spacing over wavelength.

    Returns:
        float: xi in (0, 1].
    """
    if var_aoa < 0:
        raise InvalidArgumentError(f"var_aoa must be nonnegative, got {var_aoa}")
    if var_aoa == 0:
        return 1.0
    beamwidth = hpbw(n_elems)

    if PowerLossMode(mode) == PowerLossMode.HALF_POWER:
        if var_aoa <= beamwidth / 2:
            return 0.5
        logger.warning(
            f"AoA error variance {var_aoa:.4g} exceeds half the beamwidth "
            f"{beamwidth / 2:.4g}; estimating the power loss by Monte Carlo"
        )

    rng = rng if rng is not None else np.random.default_rng(0)
    return _mean_beam_gain(var_aoa, n_elems, rng, n_draws, angle, spacing_ratio)


def impaired_pilot_reception(
    channels, beams, pilots, profile, noise, rng, beam_angles=None, spacing_ratio=0.5
):
    """
    Uplink pilot reception through impaired phase shifters and beams.

    Thermal noise is drawn from ``rng`` exactly as in ``uplink_pilot_reception``;
    the four impairments draw from child streams spawned from it. An AoA error
    matrix is applied only when its variance is positive. Under the calibrated
    form each BS beam keeps ``profile.xi`` of its power and each user beam
    keeps ``profile.xi_ms``.

    Args:
        channels (list[ChannelRealization]): One channel per user.
        beams (AnalogBeamformers): Trained beams.
        pilots (PilotMatrix): The pilots.
        profile (ImpairmentProfile): Impairment levels.
        noise (NoiseConfig): Noise powers.
        rng (numpy.random.Generator): Stream for noise; parent of the impairment streams.
        beam_angles (tuple, optional): (BS angles, user angles) of the selected
            beams, required by the offset beam-error form.
        spacing_ratio (float): Element spacing over wavelength.

    Returns:
        ImpairedReception: Received matrix, LS estimate, and impaired channel.
    """
    user_phase_rng, bs_phase_rng, bs_aoa_rng, ue_aoa_rng = rng.spawn(4)
    M, P = channels[0].H.shape
    n_users = len(channels)
    if beam_angles is None:
        bs_angles = ue_angles = [None] * n_users
    else:
        bs_angles, ue_angles = beam_angles

    bs_beams = np.empty_like(beams.F_RF)
    user_signals = np.empty((M, n_users), dtype=complex)
    for k in range(n_users):
        combiner = beams.F_RF[:, k] * draw_phase_errors(bs_phase_rng, profile.b, M)
        if profile.var_aoa_bs > 0:
            combiner = combiner * _beam_error_phases(
                bs_aoa_rng,
                profile.var_aoa_bs,
                M,
                spacing_ratio,
                profile.beam_error_form,
                bs_angles[k],
                target_gain=profile.xi,
            )
        bs_beams[:, k] = combiner

        weights = beams.Q_RF[:, k]
        if profile.var_aoa_ms > 0:
            weights = weights * _beam_error_phases(
                ue_aoa_rng,
                profile.var_aoa_ms,
                P,
                spacing_ratio,
                profile.beam_error_form,
                ue_angles[k],
                target_gain=profile.xi_ms,
            )
        transmit = weights.conj() * draw_phase_errors(user_phase_rng, profile.a, P)
        user_signals[:, k] = channels[k].H @ transmit

    received = receive_pilots(bs_beams, user_signals, pilots, noise.sigma2_bs, rng)
    source_dims = (M, P, n_users)
    estimate = ls_estimate(received, pilots, source_dims=source_dims)
    truth = EquivalentChannel(
        h_eq=bs_beams.T @ user_signals, is_estimate=False, source_dims=source_dims
    )
    return ImpairedReception(received=received, estimate=estimate, impaired_truth=truth)


def rate_with_beamforming_errors(kappa, dims, coef, snr):
    """Approximate ZF rate log2(1 + [w_L^2 (MP/N) coef + w_S^2] snr) under power loss ``coef``."""
    if not 0 < coef <= 1:
        raise InvalidArgumentError(f"Power loss coefficient must be in (0, 1], got {coef}")
    los_w, scatter_w = rician_weights(kappa)
    gain = los_w**2 * dims.M * dims.P / dims.N * coef + scatter_w**2
    rate = np.log2(1.0 + gain * np.asarray(snr, dtype=float))
    return float(rate) if rate.ndim == 0 else rate


def inject_csi_error(h_eq_hat, delta2, dims, rng, scale=CsiErrorScale.NORMALIZED):
    """
    Add i.i.d. complex Gaussian CSI error to an equivalent channel.

    Args:
        h_eq_hat (np.ndarray or EquivalentChannel): Impaired noiseless channel.
        delta2 (float): Error variance parameter.
        dims (SystemDims): Supplies M and P for the normalized scale.
        rng (numpy.random.Generator): The random stream.
        scale (CsiErrorScale): ``normalized`` draws CN(0, delta2 M P) so the
            1/sqrt(MP)-normalized error has variance delta2; ``absolute``
            draws CN(0, delta2).

    Returns:
        PerturbedEquivalentChannel: The perturbed channel with its Gram data.
    """
    if delta2 < 0:
        raise InvalidArgumentError(f"delta2 must be nonnegative, got {delta2}")
    H = np.asarray(getattr(h_eq_hat, "h_eq", h_eq_hat))
    variance = delta2 * dims.M * dims.P if CsiErrorScale(scale) == CsiErrorScale.NORMALIZED else delta2
    tilde = H + complex_normal(rng, H.shape, variance)

    gram = H.T @ H.conj()
    try:
        eta = np.real(np.diag(np.linalg.inv(gram)))
    except np.linalg.LinAlgError:
        eta = np.full(H.shape[0], np.nan)
    return PerturbedEquivalentChannel(
        h_eq_hat=H, h_eq_tilde=tilde, gram=gram, eta=eta, delta2=float(delta2)
    )


def _csi_error_bracket(delta2, n_users, eta, trace_inv):
    root = math.sqrt(1.0 + delta2)
    return (
        (root - 1.0) ** 2
        - 2.0 * root * (root - 1.0) * delta2 * n_users * eta
        + root * (2.0 - root) * delta2 * trace_inv
    )


def theorem2_rate(gram, eta_kk, delta2, condition_cap=DEFAULT_CONDITION_CAP):
    """
    Closed-form per-user ZF rate under CSI error of variance ``delta2``.

    Returns ``inf`` when ``delta2`` is zero.
    """
    if delta2 < 0:
        raise InvalidArgumentError(f"delta2 must be nonnegative, got {delta2}")
    eta_kk = np.asarray(eta_kk, dtype=float)
    if delta2 == 0:
        rate = np.full(eta_kk.shape, np.inf)
    else:
        gram = np.asarray(gram)
        trace_inv = float(np.real(np.trace(checked_inverse(gram, condition_cap))))
        bracket = _csi_error_bracket(delta2, gram.shape[0], eta_kk, trace_inv)
        rate = np.log2(1.0 + 1.0 / bracket)
    return float(rate) if rate.ndim == 0 else rate


def corollary4_rate(delta2, xi_hat, kappa, dims):
    """CSI-error rate with K replaced by xi_hat M P (kappa/(kappa+1)) I."""
    if delta2 < 0:
        raise InvalidArgumentError(f"delta2 must be nonnegative, got {delta2}")
    if delta2 == 0:
        return math.inf
    los_w, _ = rician_weights(kappa)
    eigenvalue = xi_hat * dims.M * dims.P * los_w**2
    if not eigenvalue > 0:
        raise InvalidArgumentError("xi_hat and kappa must be positive")
    n = dims.N
    bracket = _csi_error_bracket(delta2, n, 1.0 / eigenvalue, n / eigenvalue)
    return math.log2(1.0 + 1.0 / bracket)


def corollary5_gap(xi_hat):
    """High-SNR rate loss log2(1/xi_hat) caused by hardware impairments."""
    if not 0 < xi_hat <= 1:
        raise InvalidArgumentError(f"xi_hat must be in (0, 1], got {xi_hat}")
    return math.log2(1.0 / xi_hat)


def first_order_inverse(gram, perturbation, condition_cap=DEFAULT_CONDITION_CAP):
    """First-order approximation K^{-1} - K^{-1} D K^{-1} of (K + D)^{-1}."""
    inverse = checked_inverse(np.asarray(gram), condition_cap)
    return inverse - inverse @ np.asarray(perturbation) @ inverse


def simulated_rate_with_csi_errors(perturbed, snr, condition_cap=DEFAULT_CONDITION_CAP):
    """
    Per-user ZF rates when the precoder is built from the erroneous CSI.

    Args:
        perturbed (PerturbedEquivalentChannel or list): One realization or several.
        snr (float or np.ndarray): Linear SNR.
        condition_cap (float): Largest accepted Gram condition number.

    Returns:
        np.ndarray: Per-user rates averaged over the realizations.
    """
    realizations = perturbed if isinstance(perturbed, (list, tuple)) else [perturbed]
    rates = []
    for realization in realizations:
        precoder = zf_precoder(realization.h_eq_tilde, condition_cap)
        sinr = downlink_sinr(realization.h_eq_hat, precoder, snr)
        rates.append(np.log2(1.0 + sinr))
    return np.mean(rates, axis=0)
