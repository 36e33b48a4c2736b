"""
Scenario configuration: the pydantic schema and the ``key = value`` file parser.
"""

import logging
import math
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from models.array_channel import HPBW_FACTOR, AngleLaw, ScatteringMode, SystemDims
from models.impairments import BeamErrorForm, CsiErrorScale, PowerLossMode
from models.pilot_equalization import PilotFamily
from models.zf_precoding import DEFAULT_CONDITION_CAP
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

MAX_SEED = 2**64 - 1

DEFAULT_DIMS = {"M": 100, "P": 16, "N": 4}

# Scenarios evaluated at one SNR use this one when snr_db is not given.
SINGLE_POINT_SNR_DB = "30"


class Scenario(str, Enum):
    MSE_SWEEP = "MseSweep"
    RATE_VS_SNR = "RateVsSnr"
    RATE_VS_KAPPA = "RateVsKappa"
    IMPAIRMENTS = "Impairments"
    ANTENNA_SWEEP = "AntennaSweep"


# Sweep keys a scenario evaluates at one point only.
SINGLE_VALUED_KEYS = {
    Scenario.MSE_SWEEP: {"kappa"},
    Scenario.RATE_VS_SNR: {"kappa"},
    Scenario.RATE_VS_KAPPA: {"snr_db"},
    Scenario.IMPAIRMENTS: {"kappa"},
    Scenario.ANTENNA_SWEEP: {"kappa", "snr_db"},
}


def parse_sweep(text):
    """
    Parse ``start:step:stop``, a comma list, or a single number.

    Returns:
        list[float]: The sweep values, non-empty and strictly monotone.

    Raises:
        ValueError: If the text is malformed or the sweep is not monotone.
    """
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"expected start:step:stop, got '{text}'")
        start, step, stop = (float(p) for p in parts)
        if step == 0 or not all(map(math.isfinite, (start, step, stop))):
            raise ValueError(f"invalid sweep '{text}'")
        if (stop - start) * step < 0:
            raise ValueError(f"step of '{text}' points away from stop")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        values = [start + i * step for i in range(count)]
    else:
        values = [float(p) for p in text.split(",") if p.strip()]
    if not values:
        raise ValueError("sweep is empty")
    diffs = [b - a for a, b in zip(values, values[1:])]
    if diffs and not (all(d > 0 for d in diffs) or all(d < 0 for d in diffs)):
        raise ValueError(f"sweep '{text}' is not strictly monotone")
    return values


def _sweep_validator(value):
    if isinstance(value, (int, float)):
        return [value]
    if isinstance(value, str):
        return parse_sweep(value)
    return value


def _swept_axis(scenario, sweep_axis):
    # MseSweep always sweeps the BS array.
    if scenario == Scenario.MSE_SWEEP:
        return "M"
    return sweep_axis or "M"


def _check_single_valued(name, values, scenario):
    if scenario is not None and name in SINGLE_VALUED_KEYS[scenario] and len(values) > 1:
        raise ValueError(f"{scenario.value} runs at a single {name}, got {len(values)} values")


class ImpairmentSettings(BaseModel):
    """
    Impairment levels as written in a config file.

    Angles are in degrees here; ``var_aoa_bs`` and ``delta2`` default to
    half the BS beamwidth and 0.005 when left unset. AoA errors default to
    the calibrated form, so simulated beams lose the same power that the
    closed forms assume.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    a_deg: float = Field(default=3.0, ge=0, lt=180)
    b_deg: float = Field(default=3.0, ge=0, lt=180)
    var_aoa_bs: Optional[float] = Field(default=None, ge=0)
    var_aoa_ms: float = Field(default=0.0, ge=0)
    delta2: float = Field(default=0.005, ge=0)
    loss_mode: PowerLossMode = PowerLossMode.HALF_POWER
    beam_error_form: BeamErrorForm = BeamErrorForm.CALIBRATED

    def bs_variance(self, M):
        return self.var_aoa_bs if self.var_aoa_bs is not None else HPBW_FACTOR / M / 2


class ScenarioConfig(BaseModel):
    """Everything a scenario run depends on besides the thread count."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    scenario: Scenario
    dims: SystemDims = SystemDims(**DEFAULT_DIMS)
    kappa: List[float] = [2.0]
    snr_db: List[float] = parse_sweep("-10:5:30")
    pilot_snr_db: float = 10.0
    tone_snr_db: float = 20.0
    trials: int = Field(default=200, ge=1)
    seed: int = Field(default=0, ge=0, le=MAX_SEED)
    out_path: Path = Path("results.csv")
    gnuplot: bool = False
    threads: int = Field(default=1, ge=1)
    sweep_axis: str = Field(default="M", pattern="^[MP]$")
    antennas: List[int] = [40, 80, 120, 160, 200]
    scattering_mode: ScatteringMode = ScatteringMode.IID_GAUSSIAN
    n_clusters: int = Field(default=1, ge=1)
    paths_per_cluster: Tuple[int, ...] = (1,)
    angle_law: AngleLaw = AngleLaw.GRID
    min_separation: Optional[float] = Field(default=None, ge=0)
    pilot_family: PilotFamily = PilotFamily.DFT
    fresh_tone_noise: bool = False
    condition_cap: float = Field(default=DEFAULT_CONDITION_CAP, gt=1)
    csi_error_scale: CsiErrorScale = CsiErrorScale.ABSOLUTE
    profile: Optional[ImpairmentSettings] = None

    @field_validator("kappa", "snr_db", mode="before")
    @classmethod
    def _parse_float_sweep(cls, value):
        return _sweep_validator(value)

    @field_validator("antennas", mode="before")
    @classmethod
    def _parse_int_sweep(cls, value, info):
        values = _sweep_validator(value)
        if any(float(v) != int(float(v)) or float(v) < 1 for v in values):
            raise ValueError("antenna counts must be positive integers")
        dims = info.data.get("dims")
        if dims is not None and _swept_axis(info.data.get("scenario"), info.data.get("sweep_axis")) == "M":
            if any(int(float(v)) < dims.N_RF for v in values):
                raise ValueError(f"BS antenna counts must be at least N_RF={dims.N_RF}")
        return [int(float(v)) for v in values]

    @field_validator("paths_per_cluster", mode="before")
    @classmethod
    def _parse_paths(cls, value):
        if isinstance(value, str):
            return tuple(int(p) for p in value.split(",") if p.strip())
        return value

    @field_validator("paths_per_cluster")
    @classmethod
    def _paths_match_clusters(cls, value, info):
        if any(n < 1 for n in value):
            raise ValueError("paths per cluster must be positive")
        if info.data.get("scattering_mode") == ScatteringMode.CLUSTERED:
            if len(value) != info.data.get("n_clusters"):
                raise ValueError(f"need one path count per cluster, got {len(value)}")
        return value

    @field_validator("kappa")
    @classmethod
    def _nonnegative_kappa(cls, value, info):
        if any(not k >= 0 for k in value):
            raise ValueError("kappa must be nonnegative")
        _check_single_valued("kappa", value, info.data.get("scenario"))
        return value

    @field_validator("snr_db")
    @classmethod
    def _single_snr_where_needed(cls, value, info):
        _check_single_valued("snr_db", value, info.data.get("scenario"))
        return value

    @model_validator(mode="before")
    @classmethod
    def _single_point_snr_default(cls, data):
        if isinstance(data, dict) and "snr_db" not in data:
            try:
                scenario = Scenario(data.get("scenario"))
            except ValueError:
                return data
            if "snr_db" in SINGLE_VALUED_KEYS[scenario]:
                data = {**data, "snr_db": SINGLE_POINT_SNR_DB}
        return data

    def sweep_dims(self, count):
        """
        Dims with the swept antenna count substituted.

        Raises:
            ConfigError: If the count does not give valid dims.
        """
        axis = _swept_axis(self.scenario, self.sweep_axis)
        try:
            return SystemDims(**{**self.dims.model_dump(), axis: count})
        except ValidationError as e:
            raise ConfigError("antennas", f"{axis}={count}: {e.errors()[0]['msg']}") from None

    @property
    def impairments(self):
        """Impairment settings, falling back to the defaults when no profile keys were given."""
        return self.profile or ImpairmentSettings()

    def resolved_min_separation(self, dims):
        if self.min_separation is not None:
            return self.min_separation
        return 2 * HPBW_FACTOR / dims.M


def describe_schema():
    """Human-readable list of config keys and defaults, used by ``--help``."""
    lines = []
    defaults = ScenarioConfig.model_construct()
    for name, field in ScenarioConfig.model_fields.items():
        if name in ("dims", "profile"):
            continue
        default = "required" if field.is_required() else getattr(defaults, name)
        if isinstance(default, Enum):
            default = default.value
        lines.append(f"  {name} = {default}")
    dims = SystemDims(**DEFAULT_DIMS)
    for name in SystemDims.model_fields:
        lines.append(f"  dims.{name} = {getattr(dims, name)}")
    settings = ImpairmentSettings()
    for name in ImpairmentSettings.model_fields:
        value = getattr(settings, name)
        if isinstance(value, Enum):
            value = value.value
        if value is None:
            value = "1.782/(2M)"
        lines.append(f"  profile.{name} = {value}")
    return "\n".join(lines)


def _strip_comment(line):
    return line.split("#", 1)[0].strip()


def parse_assignments(lines, origin="config"):
    """
    Turn ``key = value`` lines into a nested dict keyed by dotted names.

    Raises:
        ConfigError: On a line without ``=`` or with an empty key.
    """
    tree = {}
    for number, raw in enumerate(lines, start=1):
        line = _strip_comment(raw)
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(None, f"{origin} line {number}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or any(not part for part in key.split(".")):
            raise ConfigError(key or None, f"{origin} line {number}: malformed key")
        node = tree
        *parents, leaf = key.split(".")
        for parent in parents:
            child = node.setdefault(parent, {})
            if not isinstance(child, dict):
                raise ConfigError(key, f"'{parent}' is not a section")
            node = child
        if isinstance(node.get(leaf), dict):
            raise ConfigError(key, "cannot assign a value to a section")
        node[leaf] = value
    return tree


def _merge(base, update):
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_config(source, overrides=(), scenario=None):
    """
    Parse config text into a validated ScenarioConfig.

    Args:
        source (str): Config file contents.
        overrides (iterable[str]): Extra ``key=value`` assignments applied after the file.
        scenario (str, optional): Scenario name that takes precedence over the file.

    Returns:
        ScenarioConfig: The validated configuration.

    Raises:
        ConfigError: Naming the offending key.
    """
    tree = parse_assignments(source.splitlines())
    tree = _merge(tree, parse_assignments(overrides, origin="override"))
    if scenario is not None:
        tree["scenario"] = scenario
    if isinstance(tree.get("dims"), dict):
        tree["dims"] = _merge(DEFAULT_DIMS, tree["dims"])
    try:
        return ScenarioConfig.model_validate(tree)
    except ValidationError as e:
        error = e.errors()[0]
        key = ".".join(str(part) for part in error["loc"]) or None
        if error["type"] == "extra_forbidden":
            message = "unknown key"
        elif error["type"] == "missing":
            message = "required key is missing"
        else:
            message = error["msg"]
        logger.error(f"Failed to validate config: {key}: {message}")
        raise ConfigError(key, message) from None
