"""Scenario generation and seeded Monte Carlo campaign orchestration:
rate CDFs over user drops, antenna sweeps, and detection probability
versus target range with cached threshold calibration.

Reproducibility: every random draw comes from a Generator seeded by
(config seed, domain, unit index), so results are bit-exact regardless
of worker count; workers merge by unit index.
"""

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace, field
from typing import Optional

import numpy as np

from . import __version__
from .geometry import ArrayGeometry, Direction, SPEED_OF_LIGHT, beam_gain
from .propagation import (
    PathLossParams,
    RadarTarget,
    UserModel,
    complex_normal,
    draw_channel,
    make_radar_target,
    pathloss,
    rice_k_factor,
    user_geometry_from_position,
)
from .estimation import (
    PilotBook,
    hbar,
    lmmse_apply,
    lmmse_estimate,
    make_pilots,
    pilot_rx,
    pm_estimate,
)
from .beamforming import BeamformerSet, matched_beamformer, pbr_beamformer, zfr_beamformer
from .radar import (
    OfdmParams,
    build_tx_grid,
    calibrate_threshold,
    echo_synthesize,
    glrt_detect,
    h0_max_statistics,
    natural_grid,
    ofdm_params,
    project_tx,
    wilson_interval,
)
from .rates import build_rate_inputs, rate_lmmse, rate_pm
from .config import ExperimentConfig, config_hash
from .errors import CampaignError

# seed stream domains
_D_RATE_DROP = 1
_D_DET_DROP = 2
_D_CALIBRATION = 3
_D_DET_TRIAL = 4
_D_SURFACE = 5

WORKERS_ENV = "JCAS_WORKERS"


def rng_for(seed, *path):
    """Deterministic per-unit random stream, independent of workers."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _pmap(fn, args_list, workers):
    if workers <= 1 or len(args_list) <= 1:
        return [fn(args) for args in args_list]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, args_list))


def noise_variance(n0_dbm_hz, noise_figure_db, bandwidth_hz) -> float:
    """Thermal noise power in watts over `bandwidth_hz`."""
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return 10.0 ** ((n0_dbm_hz + noise_figure_db) / 10.0) * 1e-3 * bandwidth_hz


@dataclass(frozen=True)
class DropRegion:
    """User drop region: x in [x_min, x_max], |y| in [y_min, y_max]
    (both signs equally likely), fixed user and BS heights."""

    x_min: float = 10.0
    x_max: float = 100.0
    y_min: float = 10.0
    y_max: float = 50.0
    user_height: float = 1.65
    bs_height: float = 15.0

    def __post_init__(self):
        if self.x_min >= self.x_max or self.y_min >= self.y_max:
            raise ValueError("empty drop region")


def drop_users(k, region: DropRegion, rng) -> list:
    """k user positions drawn uniformly over the region."""
    if k < 1:
        raise ValueError("need at least one user")
    users = []
    for _ in range(k):
        x = rng.uniform(region.x_min, region.x_max)
        y = rng.uniform(region.y_min, region.y_max)
        if rng.uniform() < 0.5:
            y = -y
        users.append(
            user_geometry_from_position(x, y, region.user_height, region.bs_height)
        )
    return users


@dataclass(frozen=True)
class Scenario:
    """One realized simulation setup: the geometry, user drop and models,
    optional target, powers, grid and noise that every trial shares."""

    geom: ArrayGeometry
    bs_height: float
    users: tuple  # UserGeometry
    models: tuple  # UserModel
    target: Optional[RadarTarget]
    p_dl: float
    p_r: float
    ofdm: OfdmParams
    noise_var: float
    book: PilotBook
    tau_c: int
    seed: int
    radar_direction: Optional[Direction] = None

    @property
    def rcr(self):
        return self.p_r / self.p_dl


@dataclass
class CampaignResult:
    """Tabular campaign output plus reproducibility metadata. `aux`
    holds in-memory extras (per-trial decisions) that never hit disk."""

    name: str
    columns: tuple
    rows: list
    metadata: dict
    aux: dict = field(default_factory=dict)


def _geometry(cfg: ExperimentConfig, array_idx=0) -> ArrayGeometry:
    n_y, n_z = cfg.arrays[array_idx]
    wavelength = SPEED_OF_LIGHT / cfg.carrier_frequency_hz
    return ArrayGeometry(
        n_y=n_y, n_z=n_z, spacing=cfg.spacing_wavelengths * wavelength,
        wavelength=wavelength,
    )


def _region(cfg: ExperimentConfig) -> DropRegion:
    return DropRegion(
        x_min=cfg.x_min_m, x_max=cfg.x_max_m, y_min=cfg.y_min_m, y_max=cfg.y_max_m,
        user_height=cfg.user_height_m, bs_height=cfg.bs_height_m,
    )


def _pathloss_params(cfg: ExperimentConfig, shadowing=True) -> PathLossParams:
    return PathLossParams(
        breakpoints_m=tuple(cfg.pathloss_breakpoints_m),
        exponents=tuple(cfg.pathloss_exponents),
        anchor_distance_m=cfg.pathloss_anchor_distance_m,
        anchor_beta_db=cfg.pathloss_anchor_db,
        shadowing_sigma_db=cfg.shadowing_sigma_db if shadowing else 0.0,
        los_intercept_db=cfg.los_intercept_db,
        los_decade_slope_db=cfg.los_decade_slope_db,
        carrier_frequency_hz=cfg.carrier_frequency_hz,
    )


def _user_models(cfg, kind, users, rng) -> list:
    """Large-scale models for one drop under one channel model family."""
    plp = _pathloss_params(cfg)
    models = []
    for u in users:
        if kind == "rayleigh":
            beta = pathloss("three_slope", u, rng, plp)
            models.append(UserModel("rayleigh", beta))
        elif kind == "los":
            beta = pathloss("los_3gpp", u, rng, plp)
            models.append(UserModel("los", beta, direction=u.direction))
        elif kind == "rice":
            beta = pathloss("rice_base", u, rng, plp)
            models.append(
                UserModel(
                    "rice", beta, direction=u.direction,
                    rice_k=rice_k_factor(u.distance_2d),
                )
            )
        else:
            raise CampaignError(f"unknown channel model {kind!r}")
    return models


def _radar_direction(cfg) -> Direction:
    return Direction(
        azimuth=np.deg2rad(cfg.radar_azimuth_deg),
        elevation=np.deg2rad(cfg.radar_elevation_deg),
    )


def per_cell_eta(cfg) -> float:
    """eta_k = P_DL/(K M N) under uniform allocation."""
    return cfg.p_dl_watts / (cfg.users * cfg.subcarriers * cfg.ofdm_symbols)


def eta_radar_for(cfg, rcr_db) -> float:
    """eta_R = P_R/(M N) with P_R = RCR * P_DL."""
    p_r = cfg.p_dl_watts * 10.0 ** (rcr_db / 10.0)
    return p_r / (cfg.subcarriers * cfg.ofdm_symbols)


RATE_COLUMNS = (
    "drop", "user", "channel_model", "estimator", "radar_kind", "rcr_db",
    "n_y", "n_z", "rate_bps_hz", "sinr", "desired_power",
    "interference_power", "self_term_power", "radar_leakage_power",
    "noise_power",
)

DETECTION_COLUMNS = (
    "range_m", "radar_kind", "rcr_db", "pd", "ci_low", "ci_high", "trials",
)


def _rate_drop_rows(args):
    """All rate rows for one (array config, drop) unit."""
    cfg, array_idx, drop_idx = args
    geom = _geometry(cfg, array_idx)
    region = _region(cfg)
    rng = rng_for(cfg.seed, _D_RATE_DROP, array_idx, drop_idx)
    users = drop_users(cfg.users, region, rng)
    sigma_sq = noise_variance(cfg.n0_dbm_hz, cfg.noise_figure_db, cfg.bandwidth_hz)
    book = make_pilots(cfg.effective_tau_p, cfg.users, cfg.effective_pilot_power)
    eta = np.full(cfg.users, per_cell_eta(cfg))
    radar_dir = _radar_direction(cfg)
    w_pbr = pbr_beamformer(geom, radar_dir)
    want_lmmse = "lmmse" in cfg.estimators
    rows = []
    for model_kind in cfg.channel_models:
        models = _user_models(cfg, model_kind, users, rng)
        channels = [draw_channel(m, geom, rng) for m in models]
        y_pilot = pilot_rx(channels, book, sigma_sq, rng)
        base = build_rate_inputs(
            models, geom, book, sigma_sq, eta, eta_radar=0.0, w_radar=w_pbr,
            tau_c=cfg.tau_c, sigma_z_sq=sigma_sq, with_lmmse=want_lmmse,
        )
        estimates = {}
        if "pm" in cfg.estimators:
            estimates["pm"] = pm_estimate(y_pilot, book)
        if want_lmmse:
            estimates["lmmse"] = lmmse_apply(y_pilot, book, base.e_matrices)
        for estimator in cfg.estimators:
            radar_beams = {}
            if "pbr" in cfg.radar_kinds:
                radar_beams["pbr"] = w_pbr
            if "zfr" in cfg.radar_kinds:
                radar_beams["zfr"] = zfr_beamformer(
                    geom, radar_dir, estimates[estimator].h_hat
                )
            for kind in cfg.radar_kinds:
                for rcr_db in cfg.rcr_db_list:
                    inputs = replace(
                        base,
                        w_radar=radar_beams[kind],
                        eta_radar=eta_radar_for(cfg, rcr_db),
                    )
                    report = (
                        rate_pm(inputs) if estimator == "pm" else rate_lmmse(inputs)
                    )
                    for k in range(cfg.users):
                        rows.append(
                            (
                                drop_idx, k, model_kind, estimator, kind,
                                float(rcr_db), geom.n_y, geom.n_z,
                                float(report.rates[k]), float(report.sinr[k]),
                                float(report.desired[k]),
                                float(report.interference[k]),
                                float(report.self_term[k]),
                                float(report.radar_leakage[k]),
                                float(report.noise),
                            )
                        )
    return rows


def _metadata(cfg):
    return {
        "seed": cfg.seed,
        "kind": cfg.kind,
        "config_sha256": config_hash(cfg),
        "version": f"jcas-{__version__}+cfg.{config_hash(cfg)[:8]}",
    }


def run_rate_campaign(cfg: ExperimentConfig, workers=None) -> CampaignResult:
    """Rate CDFs over user drops; `antenna_sweep` just lists several
    array configs."""
    workers = worker_count() if workers is None else workers
    units = [
        (cfg, ai, di) for ai in range(len(cfg.arrays)) for di in range(cfg.drops)
    ]
    columns = RATE_COLUMNS
    if cfg.include_throughput:
        columns = columns + ("rate_mbps",)
    rows = []
    for unit_rows in _pmap(_rate_drop_rows, units, workers):
        for row in unit_rows:
            if cfg.include_throughput:
                row = row + (row[8] * cfg.bandwidth_hz / 1e6,)
            rows.append(row)
    return CampaignResult(
        name="rates", columns=columns, rows=rows, metadata=_metadata(cfg)
    )


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    """Realize the fixed part of a detection/calibration setup: user
    drop, large-scale models, pilot book, OFDM grid, nominal target."""
    geom = _geometry(cfg, 0)
    rng = rng_for(cfg.seed, _D_DET_DROP)
    users = drop_users(cfg.users, _region(cfg), rng)
    models = _user_models(cfg, cfg.channel_models[0], users, rng)
    book = make_pilots(cfg.effective_tau_p, cfg.users, cfg.effective_pilot_power)
    sigma_sq = noise_variance(cfg.n0_dbm_hz, cfg.noise_figure_db, cfg.bandwidth_hz)
    radar_dir = _radar_direction(cfg)
    target = make_radar_target(
        radar_dir, cfg.target_range_m, cfg.target_speed_mps, cfg.rcs_m2,
        geom.n_elements, cfg.carrier_frequency_hz,
    )
    return Scenario(
        geom=geom, bs_height=cfg.bs_height_m, users=tuple(users),
        models=tuple(models), target=target, p_dl=cfg.p_dl_watts,
        p_r=cfg.p_dl_watts * 10.0 ** (cfg.rcr_db_list[0] / 10.0),
        ofdm=ofdm_params(
            cfg.subcarriers, cfg.ofdm_symbols,
            cfg.subcarrier_spacing_khz * 1e3, cfg.cp_fraction,
        ),
        noise_var=sigma_sq, book=book, tau_c=cfg.tau_c, seed=cfg.seed,
        radar_direction=radar_dir,
    )


def _detection_drop(cfg):
    """Fixed user drop shared by every detection/calibration trial."""
    sc = build_scenario(cfg)
    return sc.geom, list(sc.users), list(sc.models), sc.book, sc.noise_var


def _trial_beams(cfg, geom, models, book, sigma_sq, radar_dir, kind, rng):
    """Fresh channels -> estimates -> beamformer set for one trial."""
    channels = [draw_channel(m, geom, rng) for m in models]
    y_pilot = pilot_rx(channels, book, sigma_sq, rng)
    estimator = cfg.estimators[0]  # detection is estimator-invariant
    if estimator == "pm":
        est = pm_estimate(y_pilot, book)
    else:
        hbars = [hbar(m, geom) for m in models]
        est = lmmse_estimate(y_pilot, book, hbars, sigma_sq)
    comm = np.stack([matched_beamformer(h) for h in est.h_hat])
    if kind == "pbr":
        radar = pbr_beamformer(geom, radar_dir)
    else:
        radar = zfr_beamformer(geom, radar_dir, est.h_hat)
    return BeamformerSet(comm=comm, radar=radar, radar_kind=kind)


def _calibrated_threshold(cfg, geom, models, book, sigma_sq, params, dd_grid,
                          kind, rcr_db, cache, point_idx):
    key = (kind, float(rcr_db))
    if key in cache:
        return cache[key]
    from .geometry import steering_vector

    radar_dir = _radar_direction(cfg)
    a = steering_vector(geom, radar_dir)
    p_r = cfg.p_dl_watts * 10.0 ** (rcr_db / 10.0)

    def sample(trials, rng):
        def fresh_projection(trial_rng):
            beams = _trial_beams(
                cfg, geom, models, book, sigma_sq, radar_dir, kind, trial_rng
            )
            return project_tx(beams, params, cfg.p_dl_watts, p_r, a, trial_rng)

        return h0_max_statistics(
            fresh_projection, params, geom.n_elements, sigma_sq, dd_grid,
            trials, rng,
        )

    rng = rng_for(cfg.seed, _D_CALIBRATION, point_idx)
    threshold = calibrate_threshold(
        sample, cfg.target_pfa, cfg.calibration_trials, rng
    )
    cache[key] = threshold
    return threshold


def _detection_point(args):
    """P_D at one (radar kind, RCR, range) point; trial t reuses the
    same seed across points so points are paired."""
    cfg, kind, rcr_db, range_m, threshold = args
    geom, users, models, book, sigma_sq = _detection_drop(cfg)
    params = ofdm_params(
        cfg.subcarriers, cfg.ofdm_symbols, cfg.subcarrier_spacing_khz * 1e3,
        cfg.cp_fraction,
    )
    dd_grid = natural_grid(params, cfg.doppler_cap_ratio)
    radar_dir = _radar_direction(cfg)
    p_r = cfg.p_dl_watts * 10.0 ** (rcr_db / 10.0)
    decisions = np.zeros(cfg.detection_trials, dtype=bool)
    for t in range(cfg.detection_trials):
        rng = rng_for(cfg.seed, _D_DET_TRIAL, t)
        beams = _trial_beams(
            cfg, geom, models, book, sigma_sq, radar_dir, kind, rng
        )
        grid = build_tx_grid(params, beams, cfg.p_dl_watts, p_r, rng)
        phase = rng.uniform(0, 2 * np.pi) if cfg.random_target_phase else 0.0
        target = make_radar_target(
            radar_dir, range_m, cfg.target_speed_mps, cfg.rcs_m2,
            geom.n_elements, cfg.carrier_frequency_hz, phase=phase,
        )
        rx = echo_synthesize(grid, target, geom, sigma_sq, rng)
        report = glrt_detect(rx, grid, radar_dir, geom, dd_grid, threshold)
        decisions[t] = report.decision == "H1"
    return decisions


def run_detection_campaign(cfg: ExperimentConfig, workers=None) -> CampaignResult:
    """P_D versus range per (radar kind, RCR), threshold calibrated once
    per (kind, RCR) and shared across ranges."""
    workers = worker_count() if workers is None else workers
    geom, users, models, book, sigma_sq = _detection_drop(cfg)
    params = ofdm_params(
        cfg.subcarriers, cfg.ofdm_symbols, cfg.subcarrier_spacing_khz * 1e3,
        cfg.cp_fraction,
    )
    dd_grid = natural_grid(params, cfg.doppler_cap_ratio)
    cache = {}
    points = []
    for ki, kind in enumerate(cfg.radar_kinds):
        for ri, rcr_db in enumerate(cfg.rcr_db_list):
            threshold = _calibrated_threshold(
                cfg, geom, models, book, sigma_sq, params, dd_grid, kind,
                rcr_db, cache, point_idx=ki * 100 + ri,
            )
            for range_m in cfg.range_sweep_m:
                points.append((cfg, kind, float(rcr_db), float(range_m), threshold))
    all_decisions = _pmap(_detection_point, points, workers)
    rows = []
    aux = {"decisions": {}, "thresholds": dict(cache)}
    for (cfg_, kind, rcr_db, range_m, threshold), decisions in zip(
        points, all_decisions
    ):
        k = int(decisions.sum())
        n = len(decisions)
        low, high = wilson_interval(k, n)
        rows.append((range_m, kind, rcr_db, k / n, low, high, n))
        aux["decisions"][(kind, rcr_db, range_m)] = decisions
    return CampaignResult(
        name="detection", columns=DETECTION_COLUMNS, rows=rows,
        metadata=_metadata(cfg), aux=aux,
    )


def run_beam_pattern(cfg: ExperimentConfig) -> CampaignResult:
    """Azimuth cut of the PBR/ZFR patterns for one seeded drop."""
    geom, users, models, book, sigma_sq = _detection_drop(cfg)
    radar_dir = _radar_direction(cfg)
    rng = rng_for(cfg.seed, _D_DET_TRIAL, 0)
    rows = []
    for kind in cfg.radar_kinds:
        beams = _trial_beams(cfg, geom, models, book, sigma_sq, radar_dir, kind, rng)
        for az_deg in np.arange(-90.0, 90.5, 1.0):
            d = Direction(np.deg2rad(az_deg), np.deg2rad(cfg.radar_elevation_deg))
            rows.append(
                (kind, float(az_deg), cfg.radar_elevation_deg,
                 beam_gain(geom, beams.radar, d))
            )
    return CampaignResult(
        name="beam_pattern",
        columns=("radar_kind", "azimuth_deg", "elevation_deg", "gain"),
        rows=rows, metadata=_metadata(cfg),
    )


def run_calibration(cfg: ExperimentConfig) -> list:
    """Threshold calibration per (kind, RCR) with a full-pipeline P_FA
    re-measurement, plus one exported GLRT surface."""
    geom, users, models, book, sigma_sq = _detection_drop(cfg)
    params = ofdm_params(
        cfg.subcarriers, cfg.ofdm_symbols, cfg.subcarrier_spacing_khz * 1e3,
        cfg.cp_fraction,
    )
    dd_grid = natural_grid(params, cfg.doppler_cap_ratio)
    radar_dir = _radar_direction(cfg)
    cache = {}
    rows = []
    for ki, kind in enumerate(cfg.radar_kinds):
        for ri, rcr_db in enumerate(cfg.rcr_db_list):
            threshold = _calibrated_threshold(
                cfg, geom, models, book, sigma_sq, params, dd_grid, kind,
                rcr_db, cache, point_idx=ki * 100 + ri,
            )
            p_r = cfg.p_dl_watts * 10.0 ** (rcr_db / 10.0)
            false_alarms = 0
            n = cfg.detection_trials
            for t in range(n):
                rng = rng_for(cfg.seed, _D_SURFACE, ki, ri, t)
                beams = _trial_beams(
                    cfg, geom, models, book, sigma_sq, radar_dir, kind, rng
                )
                grid = build_tx_grid(params, beams, cfg.p_dl_watts, p_r, rng)
                rx = complex_normal(
                    rng, (params.n_sym, params.m_sub, geom.n_elements), sigma_sq
                )
                report = glrt_detect(rx, grid, radar_dir, geom, dd_grid, threshold)
                false_alarms += report.decision == "H1"
            low, high = wilson_interval(false_alarms, n)
            rows.append(
                (kind, float(rcr_db), sigma_sq, threshold,
                 cfg.calibration_trials, n, false_alarms / n, low, high)
            )
    calib = CampaignResult(
        name="calibration",
        columns=("radar_kind", "rcr_db", "noise_var_w", "threshold",
                 "calibration_trials", "remeasure_trials", "measured_pfa",
                 "ci_low", "ci_high"),
        rows=rows, metadata=_metadata(cfg),
    )
    # one H1 statistic surface for the plotting component
    rng = rng_for(cfg.seed, _D_SURFACE, 999)
    kind = cfg.radar_kinds[0]
    beams = _trial_beams(cfg, geom, models, book, sigma_sq, radar_dir, kind, rng)
    p_r = cfg.p_dl_watts * 10.0 ** (cfg.rcr_db_list[0] / 10.0)
    grid = build_tx_grid(params, beams, cfg.p_dl_watts, p_r, rng)
    target = make_radar_target(
        radar_dir, cfg.target_range_m, cfg.target_speed_mps, cfg.rcs_m2,
        geom.n_elements, cfg.carrier_frequency_hz,
    )
    rx = echo_synthesize(grid, target, geom, sigma_sq, rng)
    report = glrt_detect(rx, grid, radar_dir, geom, dd_grid, 0.0)
    surface = CampaignResult(
        name="glrt_surface",
        columns=("delay_s", "doppler_hz", "statistic"),
        rows=list(report.surface_rows()), metadata=_metadata(cfg),
    )
    return [calib, surface]


def run_experiment(cfg: ExperimentConfig, workers=None) -> list:
    """Dispatch a parsed config to its campaign; returns CampaignResults."""
    if cfg.kind in ("rate_cdf", "antenna_sweep"):
        return [run_rate_campaign(cfg, workers=workers)]
    if cfg.kind == "detection_vs_range":
        return [run_detection_campaign(cfg, workers=workers)]
    if cfg.kind == "beam_pattern":
        return [run_beam_pattern(cfg)]
    if cfg.kind == "calibration":
        return run_calibration(cfg)
    raise CampaignError(f"unknown experiment kind {cfg.kind!r}")
