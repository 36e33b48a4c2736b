"""End-to-end checks of the scenario runners at moderate trial counts."""

import math
from collections import defaultdict

import numpy as np
import pytest

from app.config import parse_config
from app.scenarios import ScenarioRunner, aggregate, map_trials, run_scenario
from models.array_channel import SystemDims
from models.impairments import corollary4_rate
from utils.result_utils import emit_csv


def _config(scenario, *overrides):
    return parse_config("", overrides=overrides, scenario=scenario)


def _by_metric(records):
    table = defaultdict(dict)
    for record in records:
        table[record.metric][record.x] = record
    return table


def _square(trial):
    return {"value": np.array([float(trial) ** 2])}


def test_map_trials_keeps_trial_order():
    assert [o["value"][0] for o in map_trials(_square, 6, 1)] == [0, 1, 4, 9, 16, 25]
    assert [o["value"][0] for o in map_trials(_square, 6, 2)] == [0, 1, 4, 9, 16, 25]


def test_aggregate_skips_failed_trials():
    config = _config("RateVsSnr", "trials=3")
    outcomes = [{"rate": np.array([1.0, 2.0])}, {"rate": np.array([3.0, np.nan])}, {"rate": np.array([5.0, 4.0])}]
    records = aggregate(config, [0.0, 10.0], "dB", outcomes, {"bound": np.array([9.0, 10.0])})
    table = _by_metric(records)
    assert table["rate"][0.0].value == pytest.approx(3.0)
    assert table["rate"][0.0].trials == 3
    assert table["rate"][0.0].stderr == pytest.approx(2.0 / math.sqrt(3))
    assert table["rate"][10.0].value == pytest.approx(3.0)
    assert table["rate"][10.0].trials == 2
    assert table["bound"][10.0].value == 10.0
    assert table["bound"][10.0].stderr == 0.0
    assert [r.metric for r in records[:2]] == ["rate", "bound"]


def test_mse_sweep_matches_closed_form():
    config = _config(
        "MseSweep", "trials=500", "dims.P=16", "antennas=40,100,200", "pilot_snr_db=10"
    )
    table = _by_metric(run_scenario(config))
    for M in (40, 100, 200):
        x = float(M * 16)
        closed = table["mse_closed_form"][x].value
        assert closed == pytest.approx(1.0 / (10.0 * M * 16))
        assert table["mse_empirical"][x].value == pytest.approx(closed, rel=0.05)
        assert table["mse_empirical"][x].x_unit == "MP"


def test_rate_vs_snr_bound_dominates_and_is_tight():
    config = _config(
        "RateVsSnr", "dims.M=100", "dims.P=16", "dims.N=10", "kappa=2", "snr_db=-10:5:20", "trials=200"
    )
    records = run_scenario(config)
    table = _by_metric(records)
    assert len(records) == 7 * 7
    for snr_db in config.snr_db:
        sim = table["hybrid_rate_sim"][snr_db].value
        assert sim <= table["hybrid_rate_bound"][snr_db].value
        assert table["hybrid_rate_sim_est_csi"][snr_db].value <= sim + 0.05
    assert table["hybrid_rate_bound"][10.0].value - table["hybrid_rate_sim"][10.0].value <= 1.0

    rates = [table["hybrid_rate_sim"][s].value for s in config.snr_db]
    assert rates == sorted(rates)


def test_hybrid_to_digital_gap_follows_rician_factor():
    config = _config(
        "RateVsKappa", "dims.M=512", "dims.P=16", "dims.N=4", "kappa=1,2,10,100", "snr_db=40", "trials=10"
    )
    table = _by_metric(run_scenario(config))
    for kappa in (1.0, 2.0, 10.0, 100.0):
        expected = math.log2(kappa / (kappa + 1))
        assert table["corollary3_gap"][kappa].value == pytest.approx(expected)
        assert table["bound_gap"][kappa].value == pytest.approx(expected, abs=0.05)
        assert table["bound_gap"][kappa].x_unit == "linear"
    gaps = [table["bound_gap"][k].value for k in (1.0, 2.0, 10.0, 100.0)]
    assert gaps == sorted(gaps)
    assert abs(table["bound_gap"][100.0].value) <= 0.05


def test_standard_error_shrinks_with_trial_count():
    stderr = {}
    for trials in (500, 2000):
        config = _config(
            "MseSweep", "dims.P=4", "dims.N=2", "antennas=16", "pilot_snr_db=10", f"trials={trials}"
        )
        stderr[trials] = _by_metric(run_scenario(config))["mse_empirical"][64.0].stderr
    assert stderr[500] / stderr[2000] == pytest.approx(2.0, rel=0.15)


def test_impairments_gap_and_csi_error_tracking():
    config = _config(
        "Impairments",
        "dims.M=100",
        "dims.P=8",
        "dims.N=8",
        "kappa=2",
        "snr_db=30,40",
        "trials=100",
        "profile.a_deg=3",
        "profile.b_deg=3",
        "profile.delta2=0.005",
    )
    table = _by_metric(run_scenario(config))
    assert table["gap_closed_form"][40.0].value == pytest.approx(1.0, abs=0.2)
    assert table["xi_hat"][40.0].value == pytest.approx(0.5, abs=0.01)
    assert table["xi_hat_sim"][40.0].value == pytest.approx(table["xi_hat"][40.0].value, abs=0.05)
    assert 0.0 < table["xi_monte_carlo"][40.0].value <= 1.0

    # Simulated high-SNR loss from the impaired hardware
    gap = table["rate_ideal_sim"][40.0].value - table["rate_impaired_sim"][40.0].value
    assert gap == pytest.approx(1.0, abs=0.2)
    assert table["rate_impaired_sim"][40.0].value == pytest.approx(
        table["rate_impaired_approx"][40.0].value, abs=0.5
    )

    approx = corollary4_rate(0.005, 1.0, 2.0, SystemDims(M=100, P=8, N=8))
    assert table["rate_csi_error_approx"][40.0].value == pytest.approx(approx)
    for snr_db in (30.0, 40.0):
        assert table["rate_csi_error_sim"][snr_db].value == pytest.approx(approx, abs=0.5)
    assert table["rate_impaired_csi_error_sim"][40.0].value == pytest.approx(
        table["rate_impaired_csi_error_approx"][40.0].value, abs=1.0
    )
    assert table["rate_csi_error_theorem2"][40.0].value == pytest.approx(
        table["rate_csi_error_sim"][40.0].value, abs=0.5
    )
    assert table["rate_ideal_sim"][40.0].value > table["rate_csi_error_sim"][40.0].value


def test_antenna_sweep_rates_grow_with_array_size():
    config = _config(
        "AntennaSweep",
        "dims.P=8",
        "dims.N=4",
        "sweep_axis=M",
        "antennas=32,64,128",
        "snr_db=30",
        "trials=20",
    )
    table = _by_metric(run_scenario(config))
    for metric in ("hybrid_rate_sim", "fd_rate_sim", "hybrid_rate_asymptotic", "hybrid_rate_csi_error_approx"):
        values = [table[metric][float(n)].value for n in (32, 64, 128)]
        assert values == sorted(values), metric
    assert table["hybrid_rate_sim"][64.0].x_unit == "antennas"


def test_results_do_not_depend_on_thread_count(tmp_path):
    config = _config(
        "Impairments", "dims.M=32", "dims.P=4", "dims.N=2", "snr_db=0,20", "trials=8", "seed=99"
    )
    serial, parallel, rerun = tmp_path / "serial.csv", tmp_path / "parallel.csv", tmp_path / "rerun.csv"
    emit_csv(run_scenario(config, threads=1), serial)
    emit_csv(run_scenario(config, threads=2), parallel)
    emit_csv(run_scenario(config, threads=1), rerun)
    assert serial.read_bytes() == parallel.read_bytes() == rerun.read_bytes()


def test_seed_changes_results():
    first = _config("RateVsSnr", "dims.M=32", "dims.P=4", "dims.N=2", "snr_db=10", "trials=4", "seed=1")
    second = _config("RateVsSnr", "dims.M=32", "dims.P=4", "dims.N=2", "snr_db=10", "trials=4", "seed=2")
    value = lambda config: _by_metric(run_scenario(config))["hybrid_rate_sim"][10.0].value  # noqa: E731
    assert value(first) != value(second)


def test_runner_uses_configured_thread_count():
    config = _config(
        "RateVsSnr", "dims.M=32", "dims.P=4", "dims.N=2", "snr_db=10", "trials=4", "threads=2"
    )
    runner = ScenarioRunner(config)
    assert runner.threads == 2
    assert ScenarioRunner(config, threads=1).threads == 1
    assert runner.run() == ScenarioRunner(config, threads=1).run()
