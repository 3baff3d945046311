"""Experiment configuration: a flat key-value file format with sections,
strict key checking and explicit units in every physical key name.

An empty file yields the full default setup (3 GHz carrier, 512 x 14
grid at 30 kHz spacing, 10 users, 2 W downlink, F = 9 dB,
N0 = -174 dBm/Hz). Unknown keys, wrong unit suffixes and inconsistent
derived quantities are rejected with the offending line and column.
"""

import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

EXPERIMENT_KINDS = (
    "rate_cdf",
    "antenna_sweep",
    "detection_vs_range",
    "beam_pattern",
    "calibration",
)

CHANNEL_MODELS = ("rayleigh", "los", "rice")
ESTIMATORS = ("pm", "lmmse")
RADAR_KINDS = ("pbr", "zfr")

# radar scan sector (degrees): azimuth and elevation-from-zenith
SCAN_AZIMUTH_DEG = (-60.0, 60.0)
SCAN_ELEVATION_DEG = (10.0, 80.0)


@dataclass(frozen=True)
class ExperimentConfig:
    # [experiment]
    kind: str = "rate_cdf"
    seed: int = 1
    output_dir: str = "jcas-out"
    drops: int = 200
    detection_trials: int = 1000
    calibration_trials: int = 40000
    # [array]
    arrays: tuple = ((10, 10),)
    spacing_wavelengths: float = 0.5
    bs_height_m: float = 15.0
    # [ofdm]
    carrier_frequency_ghz: float = 3.0
    subcarriers: int = 512
    ofdm_symbols: int = 14
    subcarrier_spacing_khz: float = 30.0
    cp_fraction: float = 1.0 / 14.0
    # [users]
    users: int = 10
    user_height_m: float = 1.65
    x_min_m: float = 10.0
    x_max_m: float = 100.0
    y_min_m: float = 10.0
    y_max_m: float = 50.0
    channel_models: tuple = CHANNEL_MODELS
    # [pilots]
    tau_p: object = None  # None -> K
    tau_c: int = 168
    pilot_power_watts: object = None  # None -> P_DL / K
    # [powers]
    p_dl_watts: float = 2.0
    rcr_db_list: tuple = (3.0, 10.0)
    # [noise]
    n0_dbm_hz: float = -174.0
    noise_figure_db: float = 9.0
    # [pathloss]
    shadowing_sigma_db: float = 8.0
    pathloss_anchor_db: float = -100.0
    pathloss_anchor_distance_m: float = 50.0
    pathloss_breakpoints_m: tuple = (10.0, 50.0)
    pathloss_exponents: tuple = (2.0, 3.5, 4.0)
    los_intercept_db: float = 28.0
    los_decade_slope_db: float = 22.0
    # [radar]
    radar_azimuth_deg: float = 0.0
    radar_elevation_deg: float = 45.0
    rcs_m2: float = 0.1253
    target_speed_mps: float = 0.0
    target_range_m: float = 200.0
    range_sweep_m: tuple = (150.0, 200.0, 250.0, 300.0, 350.0)
    doppler_cap_ratio: float = 0.05
    target_pfa: float = 0.01
    random_target_phase: bool = False
    # [rates]
    estimators: tuple = ESTIMATORS
    radar_kinds: tuple = RADAR_KINDS
    include_throughput: bool = False

    @property
    def bandwidth_hz(self):
        return self.subcarriers * self.subcarrier_spacing_khz * 1e3

    @property
    def carrier_frequency_hz(self):
        return self.carrier_frequency_ghz * 1e9

    @property
    def effective_tau_p(self):
        return self.users if self.tau_p is None else self.tau_p

    @property
    def effective_pilot_power(self):
        if self.pilot_power_watts is None:
            return self.p_dl_watts / self.users
        return self.pilot_power_watts


# section -> key -> (attribute, type tag)
_SCHEMA = {
    "experiment": {
        "kind": ("kind", "str"),
        "seed": ("seed", "int"),
        "output_dir": ("output_dir", "str"),
        "drops": ("drops", "int"),
        "detection_trials": ("detection_trials", "int"),
        "calibration_trials": ("calibration_trials", "int"),
    },
    "array": {
        "configs": ("arrays", "arrays"),
        "spacing_wavelengths": ("spacing_wavelengths", "float"),
        "bs_height_m": ("bs_height_m", "float"),
    },
    "ofdm": {
        "carrier_frequency_ghz": ("carrier_frequency_ghz", "float"),
        "subcarriers": ("subcarriers", "int"),
        "ofdm_symbols": ("ofdm_symbols", "int"),
        "subcarrier_spacing_khz": ("subcarrier_spacing_khz", "float"),
        "cp_fraction": ("cp_fraction", "float"),
        "bandwidth_mhz": (None, "derived"),  # consistency check only
    },
    "users": {
        "count": ("users", "int"),
        "height_m": ("user_height_m", "float"),
        "x_min_m": ("x_min_m", "float"),
        "x_max_m": ("x_max_m", "float"),
        "y_min_m": ("y_min_m", "float"),
        "y_max_m": ("y_max_m", "float"),
        "channel_models": ("channel_models", "strs"),
    },
    "pilots": {
        "tau_p": ("tau_p", "int_or_auto"),
        "tau_c": ("tau_c", "int"),
        "pilot_power_watts": ("pilot_power_watts", "float_or_auto"),
    },
    "powers": {
        "p_dl_watts": ("p_dl_watts", "float"),
        "rcr_db_list": ("rcr_db_list", "floats"),
        "p_r_watts": (None, "derived"),
    },
    "noise": {
        "n0_dbm_hz": ("n0_dbm_hz", "float"),
        "noise_figure_db": ("noise_figure_db", "float"),
    },
    "pathloss": {
        "shadowing_sigma_db": ("shadowing_sigma_db", "float"),
        "anchor_beta_db": ("pathloss_anchor_db", "float"),
        "anchor_distance_m": ("pathloss_anchor_distance_m", "float"),
        "breakpoints_m": ("pathloss_breakpoints_m", "floats"),
        "exponents": ("pathloss_exponents", "floats"),
        "los_intercept_db": ("los_intercept_db", "float"),
        "los_decade_slope_db": ("los_decade_slope_db", "float"),
    },
    "radar": {
        "azimuth_deg": ("radar_azimuth_deg", "float"),
        "elevation_deg": ("radar_elevation_deg", "float"),
        "rcs_m2": ("rcs_m2", "float"),
        "speed_mps": ("target_speed_mps", "float"),
        "range_m": ("target_range_m", "float"),
        "range_sweep_m": ("range_sweep_m", "floats"),
        "doppler_cap_ratio": ("doppler_cap_ratio", "float"),
        "target_pfa": ("target_pfa", "float"),
        "random_target_phase": ("random_target_phase", "bool"),
    },
    "rates": {
        "estimators": ("estimators", "strs"),
        "radar_kinds": ("radar_kinds", "strs"),
        "include_throughput": ("include_throughput", "bool"),
    },
}


def _parse_value(raw, tag, line, col):
    try:
        if tag == "int":
            return int(raw)
        if tag == "float" or tag == "derived":
            return float(raw)
        if tag == "bool":
            if raw.lower() in ("true", "false"):
                return raw.lower() == "true"
            raise ValueError(raw)
        if tag == "str":
            return raw
        if tag == "int_or_auto":
            return None if raw.lower() == "auto" else int(raw)
        if tag == "float_or_auto":
            return None if raw.lower() == "auto" else float(raw)
        if tag == "floats":
            return tuple(float(tok.strip()) for tok in raw.split(",") if tok.strip())
        if tag == "strs":
            return tuple(tok.strip() for tok in raw.split(",") if tok.strip())
        if tag == "arrays":
            out = []
            for tok in raw.split(","):
                tok = tok.strip()
                if not tok:
                    continue
                ny, _, nz = tok.partition("x")
                out.append((int(ny), int(nz)))
            return tuple(out)
    except (ValueError, TypeError):
        raise ConfigError(f"cannot parse {raw!r} as {tag}", line, col) from None
    raise ConfigError(f"unknown value type {tag}", line, col)


def _unknown_key_error(section, key, line, col):
    # a known quantity with the wrong unit suffix gets a pointed message
    stem = key.rsplit("_", 1)[0]
    for known in _SCHEMA.get(section, ()):
        if known != key and known.rsplit("_", 1)[0] == stem:
            return ConfigError(
                f"unit mismatch for {key!r}: this quantity is configured as "
                f"{known!r}",
                line,
                col,
            )
    return ConfigError(f"unknown key {key!r} in section [{section}]", line, col)


def parse_config(text) -> ExperimentConfig:
    """Parse and fully validate a configuration file."""
    values = {}
    derived = {}  # (section, key) -> (value, line, col)
    locations = {}
    section = None
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        stripped = line.strip()
        col = raw_line.index(stripped[0]) + 1
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno, col)
            continue
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", lineno, col)
        if section is None:
            raise ConfigError("key outside any [section]", lineno, col)
        key, _, raw_value = stripped.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _SCHEMA[section]:
            raise _unknown_key_error(section, key, lineno, col)
        attr, tag = _SCHEMA[section][key]
        value = _parse_value(raw_value, tag, lineno, col)
        if attr is None:
            derived[(section, key)] = (value, lineno, col)
        else:
            if attr in values:
                raise ConfigError(f"duplicate key {key!r}", lineno, col)
            values[attr] = value
            locations[attr] = (lineno, col)
    cfg = replace(ExperimentConfig(), **values)
    _check_derived(cfg, derived)
    problems = validate(cfg, locations)
    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


def _check_derived(cfg, derived):
    if ("ofdm", "bandwidth_mhz") in derived:
        value, line, col = derived[("ofdm", "bandwidth_mhz")]
        expect = cfg.bandwidth_hz / 1e6
        if not np.isclose(value, expect, rtol=1e-9):
            raise ConfigError(
                f"bandwidth_mhz = {value} inconsistent with subcarriers x "
                f"spacing = {expect} MHz",
                line,
                col,
            )
    if ("powers", "p_r_watts") in derived:
        value, line, col = derived[("powers", "p_r_watts")]
        expected = [
            cfg.p_dl_watts * 10.0 ** (rcr / 10.0) for rcr in cfg.rcr_db_list
        ]
        if not any(np.isclose(value, e, rtol=1e-9) for e in expected):
            raise ConfigError(
                f"p_r_watts = {value} matches none of rcr_db_list -> "
                f"{expected}",
                line,
                col,
            )


def validate(cfg: ExperimentConfig, locations=None):
    """All validation problems of a config, exhaustively."""
    locations = locations or {}
    problems = []

    def bad(attr, message):
        loc = locations.get(attr)
        if loc:
            message = f"line {loc[0]}, col {loc[1]}: {message}"
        problems.append(message)

    if cfg.kind not in EXPERIMENT_KINDS:
        bad("kind", f"kind must be one of {EXPERIMENT_KINDS}, got {cfg.kind!r}")
    if cfg.seed < 0:
        bad("seed", "seed must be nonnegative")
    if not cfg.arrays or any(ny < 1 or nz < 1 for ny, nz in cfg.arrays):
        bad("arrays", "array configs must be like 10x10 with positive sizes")
    for name in ("drops", "detection_trials", "calibration_trials", "users",
                 "subcarriers", "ofdm_symbols", "tau_c"):
        if getattr(cfg, name) < 1:
            bad(name, f"{name} must be >= 1")
    for name in ("spacing_wavelengths", "carrier_frequency_ghz",
                 "subcarrier_spacing_khz", "cp_fraction", "p_dl_watts",
                 "rcs_m2", "target_range_m"):
        if getattr(cfg, name) <= 0:
            bad(name, f"{name} must be positive")
    if cfg.x_min_m >= cfg.x_max_m or cfg.y_min_m >= cfg.y_max_m:
        bad("x_min_m", "user drop region is empty")
    if cfg.y_min_m <= 0:
        bad("y_min_m", "y_min_m must be positive (region excludes the y=0 strip)")
    if cfg.user_height_m >= cfg.bs_height_m:
        bad("user_height_m", "users must be below the BS array")
    unknown_models = set(cfg.channel_models) - set(CHANNEL_MODELS)
    if unknown_models or not cfg.channel_models:
        bad("channel_models", f"channel models must be among {CHANNEL_MODELS}")
    if set(cfg.estimators) - set(ESTIMATORS) or not cfg.estimators:
        bad("estimators", f"estimators must be among {ESTIMATORS}")
    if set(cfg.radar_kinds) - set(RADAR_KINDS) or not cfg.radar_kinds:
        bad("radar_kinds", f"radar kinds must be among {RADAR_KINDS}")
    if cfg.tau_p is not None and cfg.tau_p < 1:
        bad("tau_p", "tau_p must be >= 1 (or auto)")
    if cfg.effective_tau_p >= cfg.tau_c:
        bad("tau_c", "tau_c must exceed the pilot length tau_p")
    if cfg.pilot_power_watts is not None and cfg.pilot_power_watts <= 0:
        bad("pilot_power_watts", "pilot power must be positive (or auto)")
    if not cfg.rcr_db_list:
        bad("rcr_db_list", "need at least one RCR value")
    if not 0 < cfg.target_pfa <= 1:
        bad("target_pfa", "target_pfa must be in (0, 1]")
    if cfg.calibration_trials * cfg.target_pfa < 20:
        bad("calibration_trials",
            "calibration_trials * target_pfa must be >= 20 to resolve the tail")
    if not 0 < cfg.doppler_cap_ratio < 0.5:
        bad("doppler_cap_ratio", "doppler_cap_ratio must be in (0, 0.5)")
    if not SCAN_AZIMUTH_DEG[0] <= cfg.radar_azimuth_deg <= SCAN_AZIMUTH_DEG[1]:
        bad("radar_azimuth_deg",
            f"radar azimuth outside the scan sector {SCAN_AZIMUTH_DEG} deg")
    if not SCAN_ELEVATION_DEG[0] <= cfg.radar_elevation_deg <= SCAN_ELEVATION_DEG[1]:
        bad("radar_elevation_deg",
            f"radar elevation outside the scan sector {SCAN_ELEVATION_DEG} deg")
    if cfg.target_speed_mps < 0:
        bad("target_speed_mps", "target speed must be nonnegative")
    if any(r <= 0 for r in cfg.range_sweep_m) or not cfg.range_sweep_m:
        bad("range_sweep_m", "range sweep values must be positive")
    if (
        len(cfg.pathloss_breakpoints_m) != 2
        or not 0 < cfg.pathloss_breakpoints_m[0] < cfg.pathloss_breakpoints_m[1]
    ):
        bad("pathloss_breakpoints_m", "need two ascending positive breakpoints")
    if len(cfg.pathloss_exponents) != 3:
        bad("pathloss_exponents", "need three path-loss exponents")
    if cfg.shadowing_sigma_db < 0:
        bad("shadowing_sigma_db", "shadowing sigma must be nonnegative")
    return problems


def _format_value(value, tag):
    if tag in ("int", "str"):
        return str(value)
    if tag == "float":
        return repr(float(value))
    if tag == "bool":
        return "true" if value else "false"
    if tag == "int_or_auto":
        return "auto" if value is None else str(value)
    if tag == "float_or_auto":
        return "auto" if value is None else repr(float(value))
    if tag == "floats":
        return ", ".join(repr(float(v)) for v in value)
    if tag == "strs":
        return ", ".join(value)
    if tag == "arrays":
        return ", ".join(f"{ny}x{nz}" for ny, nz in value)
    raise ValueError(tag)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse(serialize(cfg)) == cfg."""
    lines = []
    for section, keys in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (attr, tag) in keys.items():
            if attr is None:
                continue
            lines.append(f"{key} = {_format_value(getattr(cfg, attr), tag)}")
        lines.append("")
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode()).hexdigest()
