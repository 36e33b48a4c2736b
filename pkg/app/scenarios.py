"""
Scenario runners: Monte-Carlo trials over a sweep and aggregation into result records.

Every trial rebuilds its random streams from (seed, trial, module tag), so a
trial's outcome does not depend on which worker runs it or on the sweep point
being evaluated (sweep points share random numbers).
"""

import logging
import math
from dataclasses import dataclass
from functools import partial
from multiprocessing import Pool

import numpy as np

from app.config import Scenario
from models.aoa_beam_training import NoiseConfig, default_grid, train_beamformers
from models.array_channel import RicianConfig, generate_channels
from models.impairments import (
    ImpairmentProfile,
    PowerLossMode,
    corollary4_rate,
    corollary5_gap,
    impaired_pilot_reception,
    inject_csi_error,
    power_loss_coefficient,
    rate_with_beamforming_errors,
    simulated_rate_with_csi_errors,
    theorem2_rate,
)
from models.pilot_equalization import (
    closed_form_mse,
    generate_orthogonal_pilots,
    ls_estimate,
    normalized_mse,
    true_equivalent_channel,
    uplink_pilot_reception,
)
from models.zf_precoding import (
    asymptotic_hybrid_rate,
    corollary3_gap,
    downlink_sinr,
    fully_digital_bounds,
    hybrid_rate_upper_bound,
    zf_precoder,
)
from utils.errors import PrecodingSingularError
from utils.random_utils import db_to_linear, trial_stream
from utils.result_utils import ResultRecord

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Link:
    """One trial's channels, trained beams and true equivalent channel."""

    channels: list
    beams: object
    truth: object
    bs_angles: np.ndarray
    ue_angles: np.ndarray


def build_link(config, dims, kappa, trial):
    """Draw channels for one trial and train the analog beams on them."""
    cfg = RicianConfig(
        kappa=kappa,
        scattering_mode=config.scattering_mode,
        n_clusters=config.n_clusters,
        paths_per_cluster=config.paths_per_cluster,
    )
    channels = generate_channels(
        dims,
        cfg,
        trial_stream(config.seed, trial, "angles"),
        trial_stream(config.seed, trial, "scattering"),
        law=config.angle_law,
        min_separation=config.resolved_min_separation(dims),
    )
    noise = NoiseConfig(
        tone_energy=db_to_linear(config.tone_snr_db),
        fresh_noise_per_beam=config.fresh_tone_noise,
    )
    bs_grid = default_grid(dims.M, dims.spacing_ratio)
    ue_grid = default_grid(dims.P, dims.spacing_ratio)
    beams = train_beamformers(
        channels, dims, noise, trial_stream(config.seed, trial, "training"), bs_grid, ue_grid
    )
    return Link(
        channels=channels,
        beams=beams,
        truth=true_equivalent_channel(channels, beams),
        bs_angles=bs_grid.angles[list(beams.bs_grid_idx)],
        ue_angles=ue_grid.angles[list(beams.ue_grid_idx)],
    )


def _nan_like(snr):
    return np.full(np.shape(snr), np.nan)


def _zf_rate(estimate, truth, snr, condition_cap, trial):
    """Mean per-user ZF rate when precoding on ``estimate`` over channel ``truth``."""
    try:
        precoder = zf_precoder(estimate, condition_cap)
    except PrecodingSingularError as e:
        logger.warning(f"Trial {trial}: skipping ZF rate, {e}")
        return _nan_like(snr)
    sinr = downlink_sinr(truth, precoder, snr)
    return np.mean(np.log2(1.0 + sinr), axis=-1)


def _estimated_channel(config, link, dims, trial):
    pilots = generate_orthogonal_pilots(
        dims.N, db_to_linear(config.pilot_snr_db), config.pilot_family
    )
    received = uplink_pilot_reception(
        link.channels, link.beams, pilots, NoiseConfig(), trial_stream(config.seed, trial, "pilots")
    )
    return ls_estimate(received, pilots, source_dims=(dims.M, dims.P, dims.N))


def _rate_metrics(config, dims, kappa, snr, trial):
    link = build_link(config, dims, kappa, trial)
    metrics = {
        "hybrid_rate_sim": _zf_rate(link.truth, link.truth, snr, config.condition_cap, trial),
        "hybrid_rate_sim_est_csi": _zf_rate(
            _estimated_channel(config, link, dims, trial),
            link.truth,
            snr,
            config.condition_cap,
            trial,
        ),
        "hybrid_rate_bound": hybrid_rate_upper_bound(link.beams.F_RF, kappa, dims, snr),
    }
    try:
        digital = fully_digital_bounds(link.channels, dims, snr, config.condition_cap)
        metrics["fd_rate_sim"] = digital.simulated
        metrics["fd_rate_bound"] = digital.upper
    except PrecodingSingularError as e:
        logger.warning(f"Trial {trial}: skipping fully digital rates, {e}")
        metrics["fd_rate_sim"] = metrics["fd_rate_bound"] = _nan_like(snr)
    return metrics


def _mse_trial(config, trial):
    values = []
    for count in config.antennas:
        dims = config.sweep_dims(count)
        link = build_link(config, dims, config.kappa[0], trial)
        estimate = _estimated_channel(config, link, dims, trial)
        values.append(normalized_mse(estimate, link.truth, dims))
    return {"mse_empirical": np.asarray(values)}


def _rate_vs_snr_trial(config, trial):
    snr = db_to_linear(np.asarray(config.snr_db))
    return _rate_metrics(config, config.dims, config.kappa[0], snr, trial)


def _rate_vs_kappa_trial(config, trial):
    snr = db_to_linear(config.snr_db[0])
    per_kappa = [_rate_metrics(config, config.dims, kappa, snr, trial) for kappa in config.kappa]
    metrics = {name: np.array([m[name] for m in per_kappa]) for name in per_kappa[0]}
    metrics["bound_gap"] = metrics["hybrid_rate_bound"] - metrics["fd_rate_bound"]
    return metrics


def _impairment_profile(config):
    settings = config.impairments
    return ImpairmentProfile.from_settings(
        a=math.radians(settings.a_deg),
        b=math.radians(settings.b_deg),
        var_aoa_bs=settings.bs_variance(config.dims.M),
        var_aoa_ms=settings.var_aoa_ms,
        delta2=settings.delta2,
        n_elems=config.dims.M,
        n_elems_ms=config.dims.P,
        loss_mode=settings.loss_mode,
        beam_error_form=settings.beam_error_form,
        rng=trial_stream(config.seed, 0, "power_loss"),
    )


def _csi_error_rate(config, channel, dims, snr, rng, trial):
    perturbed = inject_csi_error(
        channel, config.impairments.delta2, dims, rng, scale=config.csi_error_scale
    )
    try:
        rates = simulated_rate_with_csi_errors(perturbed, snr, config.condition_cap)
    except PrecodingSingularError as e:
        logger.warning(f"Trial {trial}: skipping CSI-error rate, {e}")
        return _nan_like(snr), perturbed
    return np.mean(rates, axis=-1), perturbed


def _impairments_trial(config, profile, trial):
    dims = config.dims
    kappa = config.kappa[0]
    snr = db_to_linear(np.asarray(config.snr_db))
    link = build_link(config, dims, kappa, trial)
    pilots = generate_orthogonal_pilots(
        dims.N, db_to_linear(config.pilot_snr_db), config.pilot_family
    )
    reception = impaired_pilot_reception(
        link.channels,
        link.beams,
        pilots,
        profile,
        NoiseConfig(sigma2_bs=0.0),
        trial_stream(config.seed, trial, "impairments"),
        beam_angles=(link.bs_angles, link.ue_angles),
        spacing_ratio=dims.spacing_ratio,
    )
    impaired = reception.impaired_truth

    csi_rng = trial_stream(config.seed, trial, "csi")
    csi_rate, perturbed = _csi_error_rate(config, link.truth, dims, snr, csi_rng, trial)
    impaired_csi_rate, _ = _csi_error_rate(config, impaired, dims, snr, csi_rng, trial)
    try:
        theorem2 = float(np.mean(theorem2_rate(perturbed.gram, perturbed.eta, profile.delta2)))
    except PrecodingSingularError:
        theorem2 = math.nan

    # Power each user's own link keeps through the impaired hardware
    retained = np.abs(np.diag(impaired.h_eq)) ** 2 / np.abs(np.diag(link.truth.h_eq)) ** 2
    return {
        "xi_hat_sim": float(np.mean(retained)),
        "rate_ideal_sim": _zf_rate(link.truth, link.truth, snr, config.condition_cap, trial),
        "rate_impaired_sim": _zf_rate(
            reception.estimate, impaired, snr, config.condition_cap, trial
        ),
        "rate_csi_error_sim": csi_rate,
        "rate_impaired_csi_error_sim": impaired_csi_rate,
        "rate_csi_error_theorem2": np.full(np.shape(snr), theorem2),
    }


def _antenna_trial(config, trial):
    snr = db_to_linear(config.snr_db[0])
    metrics = {"hybrid_rate_sim": [], "hybrid_rate_csi_error_sim": [], "fd_rate_sim": []}
    for count in config.antennas:
        dims = config.sweep_dims(count)
        link = build_link(config, dims, config.kappa[0], trial)
        metrics["hybrid_rate_sim"].append(
            _zf_rate(link.truth, link.truth, snr, config.condition_cap, trial)
        )
        csi_rate, _ = _csi_error_rate(
            config, link.truth, dims, snr, trial_stream(config.seed, trial, "csi"), trial
        )
        metrics["hybrid_rate_csi_error_sim"].append(csi_rate)
        try:
            digital = fully_digital_bounds(link.channels, dims, snr, config.condition_cap)
            metrics["fd_rate_sim"].append(digital.simulated)
        except PrecodingSingularError as e:
            logger.warning(f"Trial {trial}: skipping fully digital rate, {e}")
            metrics["fd_rate_sim"].append(math.nan)
    return {name: np.asarray(values, dtype=float) for name, values in metrics.items()}


def map_trials(trial_fn, trials, threads):
    """Evaluate ``trial_fn`` for every trial index, returning results in trial order."""
    if threads > 1:
        chunksize = max(1, trials // (4 * threads))
        with Pool(processes=threads) as pool:
            return pool.map(trial_fn, range(trials), chunksize=chunksize)
    return [trial_fn(trial) for trial in range(trials)]


def aggregate(config, xs, x_unit, outcomes, closed_forms):
    """
    Reduce per-trial metric arrays to one record per (x, metric).

    Trials that produced NaN for a metric are left out of that metric's
    mean and standard error.
    """
    simulated = {
        name: np.vstack([np.broadcast_to(o[name], (len(xs),)) for o in outcomes])
        for name in outcomes[0]
    }
    records = []
    for i, x in enumerate(xs):
        for name, values in simulated.items():
            column = values[:, i]
            column = column[~np.isnan(column)]
            count = column.size
            mean = float(np.mean(column)) if count else math.nan
            stderr = float(np.std(column, ddof=1) / math.sqrt(count)) if count > 1 else 0.0
            records.append(
                ResultRecord(
                    scenario=config.scenario.value,
                    x=float(x),
                    x_unit=x_unit,
                    metric=name,
                    value=mean,
                    trials=count,
                    stderr=stderr,
                )
            )
        for name, values in closed_forms.items():
            value = float(np.broadcast_to(values, (len(xs),))[i])
            records.append(
                ResultRecord(
                    scenario=config.scenario.value,
                    x=float(x),
                    x_unit=x_unit,
                    metric=name,
                    value=value,
                    trials=config.trials,
                    stderr=0.0,
                )
            )
    return records


class ScenarioRunner:
    """
    Runs one configured scenario: trials across worker processes, then aggregation.
    """

    def __init__(self, config, threads=None):
        """
        Initialize the runner.

        Args:
            config (ScenarioConfig): The validated configuration.
            threads (int, optional): Worker processes; defaults to ``config.threads``.
        """
        self.config = config
        self.threads = threads or config.threads
        logger.info(
            f"Initializing {config.scenario.value} runner: {config.trials} trials, "
            f"{self.threads} worker(s), seed {config.seed}"
        )

    def _map(self, trial_fn, *args):
        return map_trials(partial(trial_fn, self.config, *args), self.config.trials, self.threads)

    def run(self):
        """
        Run every trial of the scenario and aggregate the results.

        Returns:
            list[ResultRecord]: One record per sweep point and metric.
        """
        scenario = self.config.scenario
        logger.info(f"Running {scenario.value}")
        try:
            records = getattr(self, RUNNERS[scenario])()
        except Exception as e:
            logger.error(f"Failed to run scenario {scenario.value}: {e}")
            raise
        logger.info(f"{scenario.value} finished with {len(records)} records")
        return records

    def run_mse_sweep(self):
        config = self.config
        outcomes = self._map(_mse_trial)
        pilot_energy = db_to_linear(config.pilot_snr_db)
        xs, closed = [], []
        for count in config.antennas:
            dims = config.sweep_dims(count)
            xs.append(dims.M * dims.P)
            closed.append(closed_form_mse(1.0, pilot_energy, dims.M, dims.P))
        return aggregate(config, xs, "MP", outcomes, {"mse_closed_form": np.asarray(closed)})

    def run_rate_vs_snr(self):
        config = self.config
        outcomes = self._map(_rate_vs_snr_trial)
        snr = db_to_linear(np.asarray(config.snr_db))
        dims = config.dims
        closed = {
            "hybrid_rate_asymptotic": asymptotic_hybrid_rate(config.kappa[0], dims, snr),
            "fd_rate_asymptotic": np.log2(1.0 + dims.M * dims.P * snr / dims.N),
        }
        return aggregate(config, config.snr_db, "dB", outcomes, closed)

    def run_rate_vs_kappa(self):
        config = self.config
        outcomes = self._map(_rate_vs_kappa_trial)
        snr = db_to_linear(config.snr_db[0])
        dims = config.dims
        closed = {
            "hybrid_rate_asymptotic": np.array(
                [asymptotic_hybrid_rate(kappa, dims, snr) for kappa in config.kappa]
            ),
            "fd_rate_asymptotic": np.full(
                len(config.kappa), math.log2(1.0 + dims.M * dims.P * snr / dims.N)
            ),
            "corollary3_gap": np.array(
                [corollary3_gap(kappa) if kappa > 0 else -math.inf for kappa in config.kappa]
            ),
        }
        return aggregate(config, config.kappa, "linear", outcomes, closed)

    def run_impairments(self):
        config = self.config
        profile = _impairment_profile(config)
        logger.info(
            f"Impairment profile: xi={profile.xi:.4f}, xi_ms={profile.xi_ms:.4f}, "
            f"xi_hat={profile.xi_hat:.4f}, delta2={profile.delta2}, "
            f"beam errors {profile.beam_error_form.value}"
        )
        outcomes = self._map(_impairments_trial, profile)

        dims = config.dims
        kappa = config.kappa[0]
        snr = db_to_linear(np.asarray(config.snr_db))
        xi_mc = power_loss_coefficient(
            profile.var_aoa_bs,
            dims.M,
            PowerLossMode.MONTE_CARLO,
            rng=trial_stream(config.seed, 1, "power_loss"),
            spacing_ratio=dims.spacing_ratio,
        )
        closed = {
            "rate_ideal_bound": rate_with_beamforming_errors(kappa, dims, 1.0, snr),
            "rate_impaired_approx": rate_with_beamforming_errors(kappa, dims, profile.xi_hat, snr),
            "rate_csi_error_approx": corollary4_rate(profile.delta2, 1.0, kappa, dims),
            "rate_impaired_csi_error_approx": corollary4_rate(
                profile.delta2, profile.xi_hat, kappa, dims
            ),
            "gap_closed_form": corollary5_gap(profile.xi_hat),
            "xi_hat": profile.xi_hat,
            "xi_monte_carlo": xi_mc,
        }
        return aggregate(config, config.snr_db, "dB", outcomes, closed)

    def run_antenna_sweep(self):
        config = self.config
        outcomes = self._map(_antenna_trial)
        snr = db_to_linear(config.snr_db[0])
        kappa = config.kappa[0]
        xs, hybrid, digital, csi = [], [], [], []
        for count in config.antennas:
            dims = config.sweep_dims(count)
            xs.append(count)
            hybrid.append(asymptotic_hybrid_rate(kappa, dims, snr))
            digital.append(math.log2(1.0 + dims.M * dims.P * snr / dims.N))
            csi.append(corollary4_rate(config.impairments.delta2, 1.0, kappa, dims))
        closed = {
            "hybrid_rate_asymptotic": np.asarray(hybrid),
            "fd_rate_asymptotic": np.asarray(digital),
            "hybrid_rate_csi_error_approx": np.asarray(csi),
        }
        return aggregate(config, xs, "antennas", outcomes, closed)


RUNNERS = {
    Scenario.MSE_SWEEP: "run_mse_sweep",
    Scenario.RATE_VS_SNR: "run_rate_vs_snr",
    Scenario.RATE_VS_KAPPA: "run_rate_vs_kappa",
    Scenario.IMPAIRMENTS: "run_impairments",
    Scenario.ANTENNA_SWEEP: "run_antenna_sweep",
}


def run_scenario(config, threads=None):
    """
    Run every trial of a scenario and aggregate the results.

    Args:
        config (ScenarioConfig): The validated configuration.
        threads (int, optional): Worker processes; defaults to ``config.threads``.

    Returns:
        list[ResultRecord]: One record per sweep point and metric.
    """
    return ScenarioRunner(config, threads).run()
