"""OFDM grid signal construction, target echo synthesis, GLRT detection
over a delay-Doppler grid and false-alarm threshold calibration.

Everything works on the post-DFT time-frequency grid: cell (n, m) is
OFDM symbol n, subcarrier m. The echo model has two flavors: the
per-subcarrier approximation (Doppler phase constant within a symbol)
and an exact mode that keeps the intra-symbol Doppler drift and the
resulting inter-carrier leakage, used to quantify the approximation.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import ArrayGeometry, Direction, steering_vector
from .propagation import RadarTarget, complex_normal
from .beamforming import BeamformerSet
from .errors import JcasError

DEFAULT_CP_FRACTION = 1.0 / 14.0
DEFAULT_DOPPLER_CAP_RATIO = 0.05  # grid Dopplers capped at this fraction of delta_f


@dataclass(frozen=True)
class OfdmParams:
    """Time-frequency grid: M subcarriers x N symbols, subcarrier
    spacing delta_f, cyclic prefix t_cp seconds."""

    m_sub: int
    n_sym: int
    delta_f: float
    t_cp: float

    def __post_init__(self):
        if self.m_sub < 1 or self.n_sym < 1:
            raise ValueError("grid needs at least one subcarrier and one symbol")
        if self.delta_f <= 0 or self.t_cp < 0:
            raise ValueError("delta_f must be positive, t_cp nonnegative")

    @property
    def t_s(self):
        return 1.0 / self.delta_f

    @property
    def t0(self):
        return self.t_cp + self.t_s

    @property
    def bandwidth(self):
        return self.m_sub * self.delta_f


def ofdm_params(m_sub, n_sym, delta_f, cp_fraction=DEFAULT_CP_FRACTION) -> OfdmParams:
    return OfdmParams(m_sub, n_sym, delta_f, t_cp=cp_fraction / delta_f)


_QPSK_POINTS = np.exp(1j * (np.pi / 4.0 + np.pi / 2.0 * np.arange(4)))


def qpsk_symbols(rng, shape) -> np.ndarray:
    """i.i.d. unit-modulus QPSK symbols."""
    return _QPSK_POINTS[rng.integers(0, 4, size=shape)]


@dataclass(frozen=True)
class TxGrid:
    """Transmit frame: per-cell N_A-dim vectors plus the symbols and
    per-cell powers that built them."""

    params: OfdmParams
    s: np.ndarray  # (N, M, N_A)
    x_comm: np.ndarray  # (K, N, M)
    x_radar: np.ndarray  # (N, M)
    eta_comm: np.ndarray  # (K,)
    eta_radar: float
    beams: BeamformerSet


def per_cell_powers(p_dl, p_r, k_users, params: OfdmParams):
    """Per-cell symbol powers: eta_k = P_DL/(K M N), eta_R = P_R/(M N)."""
    if p_dl < 0 or p_r < 0:
        raise ValueError("powers must be nonnegative")
    cells = params.m_sub * params.n_sym
    eta_comm = np.full(k_users, p_dl / (k_users * cells)) if k_users else np.zeros(0)
    return eta_comm, p_r / cells


def build_tx_grid(params: OfdmParams, beams: BeamformerSet, p_dl, p_r, rng) -> TxGrid:
    """s(n,m) = sum_k sqrt(eta_k) x_k(n,m) w_k + sqrt(eta_R) x_R(n,m) w_R."""
    k_users = beams.comm.shape[0]
    eta_comm, eta_radar = per_cell_powers(p_dl, p_r, k_users, params)
    shape = (params.n_sym, params.m_sub)
    x_comm = qpsk_symbols(rng, (k_users,) + shape)
    x_radar = qpsk_symbols(rng, shape)
    # one (cells x streams) @ (streams x antennas) product
    scaled = np.sqrt(eta_radar) * x_radar.reshape(1, -1)
    weights = beams.radar[None, :]
    if k_users:
        scaled = np.concatenate(
            [np.sqrt(eta_comm)[:, None] * x_comm.reshape(k_users, -1), scaled]
        )
        weights = np.concatenate([beams.comm, weights])
    s = (scaled.T @ weights).reshape(shape + (weights.shape[1],))
    return TxGrid(
        params=params,
        s=s,
        x_comm=x_comm,
        x_radar=x_radar,
        eta_comm=eta_comm,
        eta_radar=eta_radar,
        beams=beams,
    )


def project_tx(
    beams: BeamformerSet, params: OfdmParams, p_dl, p_r, steering, rng
) -> np.ndarray:
    """a^H s(n,m) for a fresh frame without materializing the
    N_A-dimensional grid; `steering` is a(direction). Used by the H0
    calibration sampler where only this projection matters."""
    k_users = beams.comm.shape[0]
    eta_comm, eta_radar = per_cell_powers(p_dl, p_r, k_users, params)
    shape = (params.n_sym, params.m_sub)
    x_comm = qpsk_symbols(rng, (k_users,) + shape)
    x_radar = qpsk_symbols(rng, shape)
    b = np.sqrt(eta_radar) * np.vdot(steering, beams.radar) * x_radar
    if k_users:
        aw = beams.comm @ steering.conj()  # entry k = a^H w_k
        b = b + np.einsum("k,knm->nm", np.sqrt(eta_comm) * aw, x_comm)
    return b


def _cell_phases(params: OfdmParams, delay, doppler):
    """Per-symbol Doppler and per-subcarrier delay phase ramps of the
    echo model (conjugated by the matched statistic)."""
    n = np.arange(params.n_sym)
    m = np.arange(params.m_sub)
    return (
        np.exp(2j * np.pi * doppler * n * params.t0),
        np.exp(-2j * np.pi * m * params.delta_f * delay),
    )


def echo_synthesize(
    grid: TxGrid,
    target: RadarTarget,
    geom: ArrayGeometry,
    noise_var,
    rng,
    mode="approx",
) -> np.ndarray:
    """Received radar grid (N, M, N_A) for one target plus receiver noise.

    approx: y(n,m) = alpha a a^H s(n,m) e^{j2 pi nu n T0} e^{-j2 pi m df tau}
    exact:  keeps the intra-symbol Doppler sum before the receive DFT.
    Noise is added per cell per antenna, i.i.d. CN(0, noise_var), in both
    modes (the hypothesis test models the post-DFT noise directly).
    """
    params = grid.params
    a = steering_vector(geom, target.direction)
    b = (grid.s.reshape(-1, a.size) @ a.conj()).reshape(grid.s.shape[:2])  # a^H s
    if mode == "approx":
        if target.delay > params.t_cp:
            raise JcasError(
                f"target delay {target.delay:.3e}s exceeds the CP "
                f"{params.t_cp:.3e}s; approximate echo model invalid"
            )
        dop, del_ = _cell_phases(params, target.delay, target.doppler)
        scalar = b * dop[:, None] * del_[None, :]
    elif mode == "exact":
        m_sub = params.m_sub
        ell = np.arange(m_sub)
        m = np.arange(m_sub)
        c = b * np.exp(-2j * np.pi * ell * params.delta_f * target.delay)[None, :]
        drift = np.exp(
            2j * np.pi * m[None, :] / m_sub * (target.doppler / params.delta_f + ell[:, None])
        )
        pre_dft = c @ drift
        scalar = np.fft.fft(pre_dft, axis=1) / m_sub
        scalar *= np.exp(2j * np.pi * target.doppler * np.arange(params.n_sym) * params.t0)[:, None]
    else:
        raise ValueError(f"unknown echo mode {mode!r}")
    y = target.alpha * scalar[..., None] * a[None, None, :]
    if noise_var > 0:
        y = y + complex_normal(rng, y.shape, variance=noise_var)
    return y


def echo_deviation(grid: TxGrid, geom: ArrayGeometry, target: RadarTarget) -> float:
    """Relative energy deviation between exact and approximate noise-free
    echoes, ||Y_exact - Y_approx||_F^2 / ||Y_approx||_F^2.

    Energy is the right metric here: the detector is invariant to the
    common Dirichlet phase factor that dominates the raw amplitude
    difference.
    """
    y_ex = echo_synthesize(grid, target, geom, 0.0, None, mode="exact")
    y_ap = echo_synthesize(grid, target, geom, 0.0, None, mode="approx")
    return float(
        np.linalg.norm(y_ex - y_ap) ** 2 / np.linalg.norm(y_ap) ** 2
    )


def projected_rx(rx, grid: TxGrid, direction: Direction, geom: ArrayGeometry):
    """Sufficient statistic per cell: v(n,m) = u(n,m)^H y(n,m) with
    u(n,m) = a a^H s(n,m), i.e. v = (a^H s)^* (a^H y)."""
    a = steering_vector(geom, direction)
    cells = grid.s.shape[:2]
    b = (grid.s.reshape(-1, a.size) @ a.conj()).reshape(cells)
    ay = (rx.reshape(-1, a.size) @ a.conj()).reshape(cells)
    return b.conj() * ay


def glrt_statistic(rx, grid: TxGrid, direction, geom, delay, doppler) -> float:
    """Matched GLRT statistic for one (delay, doppler) hypothesis."""
    v = projected_rx(rx, grid, direction, geom)
    dop, del_ = _cell_phases(grid.params, delay, doppler)
    return float(np.abs(dop.conj() @ v @ del_.conj()) ** 2)


@dataclass(frozen=True)
class DelayDopplerGrid:
    """Search grid of (delay, Doppler) hypotheses."""

    delays: np.ndarray  # seconds
    dopplers: np.ndarray  # Hz

    @property
    def n_cells(self):
        return len(self.delays) * len(self.dopplers)


def natural_grid(
    params: OfdmParams, nu_max_ratio=DEFAULT_DOPPLER_CAP_RATIO
) -> DelayDopplerGrid:
    """Grid at the matched filter's natural resolution: delay step
    1/(M delta_f) over [0, T_CP], Doppler step 1/(N T0) within
    +-nu_max_ratio*delta_f (the approximation's validity region)."""
    delay_step = 1.0 / (params.m_sub * params.delta_f)
    n_delays = int(np.floor(params.t_cp / delay_step + 1e-9)) + 1
    delays = np.arange(n_delays) * delay_step
    doppler_step = 1.0 / (params.n_sym * params.t0)
    nu_max = nu_max_ratio * params.delta_f
    if nu_max >= params.delta_f / 2:
        raise ValueError("Doppler cap must stay below delta_f/2")
    l_max = int(np.floor(nu_max / doppler_step + 1e-9))
    dopplers = np.arange(-l_max, l_max + 1) * doppler_step
    return DelayDopplerGrid(delays=delays, dopplers=dopplers)


def surface_from_projection(v, params: OfdmParams, dd_grid: DelayDopplerGrid):
    """GLRT statistic over the whole grid from the per-cell projections.

    Shape (n_dopplers, n_delays); factored as |P @ V @ Q|^2 so the grid
    search is two small complex matrix products. `v` may be a single
    (N, M) grid or a batch (..., N, M).
    """
    n = np.arange(params.n_sym)
    m = np.arange(params.m_sub)
    p = np.exp(-2j * np.pi * np.outer(dd_grid.dopplers, n) * params.t0)
    q = np.exp(2j * np.pi * np.outer(m, dd_grid.delays) * params.delta_f)
    return np.abs(p @ v @ q) ** 2


@dataclass(frozen=True)
class DetectionReport:
    """GLRT outcome: statistic surface, threshold, decision, argmax cell."""

    statistic_surface: np.ndarray  # (n_dopplers, n_delays)
    grid: DelayDopplerGrid
    threshold: float
    decision: str  # "H0" | "H1"
    argmax_delay: float
    argmax_doppler: float
    argmax_value: float

    def surface_rows(self):
        """(delay_s, doppler_hz, statistic) rows for CSV export."""
        for i, nu in enumerate(self.grid.dopplers):
            for j, tau in enumerate(self.grid.delays):
                yield float(tau), float(nu), float(self.statistic_surface[i, j])


def glrt_detect(
    rx, grid: TxGrid, direction, geom, dd_grid: DelayDopplerGrid, threshold
) -> DetectionReport:
    """Evaluate the GLRT over the grid and compare the max against the
    threshold."""
    if dd_grid.n_cells == 0:
        raise JcasError("empty delay-Doppler grid")
    if not threshold >= 0:
        raise ValueError("threshold must be nonnegative")
    v = projected_rx(rx, grid, direction, geom)
    surface = surface_from_projection(v, grid.params, dd_grid)
    flat = int(np.argmax(surface))
    i, j = np.unravel_index(flat, surface.shape)
    peak = float(surface[i, j])
    return DetectionReport(
        statistic_surface=surface,
        grid=dd_grid,
        threshold=float(threshold),
        decision="H1" if peak > threshold else "H0",
        argmax_delay=float(dd_grid.delays[j]),
        argmax_doppler=float(dd_grid.dopplers[i]),
        argmax_value=peak,
    )


def h0_max_statistics(
    project_tx, params: OfdmParams, n_a, noise_var, dd_grid, trials, rng, batch=256
):
    """Max GLRT statistic over the grid for `trials` independent H0
    frames.

    Under H0 the projection v(n,m) = u(n,m)^H z(n,m) is exactly
    CN(0, noise_var * N_A * |a^H s(n,m)|^2), independent across cells
    given the transmit grid, so it is sampled directly instead of
    synthesizing N_A-dimensional noise. `project_tx(rng)` must return a
    fresh frame's a^H s grid (N, M).
    """
    if dd_grid.n_cells == 0:
        raise JcasError("empty delay-Doppler grid")
    out = np.empty(trials)
    done = 0
    while done < trials:
        nb = min(batch, trials - done)
        b = np.stack([project_tx(rng) for _ in range(nb)])  # (nb, N, M)
        scale = np.sqrt(noise_var * n_a) * np.abs(b)
        v = scale * complex_normal(rng, b.shape)
        surfaces = surface_from_projection(v, params, dd_grid)
        out[done : done + nb] = surfaces.reshape(nb, -1).max(axis=1)
        done += nb
    return out


def calibrate_threshold(sample_h0_max, target_pfa, trials, rng) -> float:
    """Empirical (1 - P_FA) quantile of the H0 max statistic.

    `sample_h0_max(trials, rng)` returns that many independent draws of
    the per-frame max statistic under H0.
    """
    if not 0 < target_pfa <= 1:
        raise ValueError("target_pfa must be in (0, 1]")
    if target_pfa >= 1.0:
        return 0.0
    if trials * target_pfa < 20:
        raise JcasError(
            f"{trials} trials cannot resolve P_FA = {target_pfa} "
            "(need trials * target_pfa >= 20)"
        )
    stats = np.asarray(sample_h0_max(trials, rng))
    return float(np.quantile(stats, 1.0 - target_pfa))


def wilson_interval(successes, trials, z=1.96):
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # the band must contain the point estimate despite rounding
    return max(min(center - half, p), 0.0), min(max(center + half, p), 1.0)


@dataclass(frozen=True)
class DetectionEstimate:
    p_d: float
    ci_low: float
    ci_high: float
    trials: int
    decisions: Optional[np.ndarray] = None  # per-trial booleans, for pairing


def detection_probability(trial_decision, threshold, trials, rng) -> DetectionEstimate:
    """Monte Carlo P(decide H1): `trial_decision(rng, threshold)` runs one
    full frame (channels, beams, echo, noise, GLRT) and returns the
    decision."""
    decisions = np.array(
        [bool(trial_decision(rng, threshold)) for _ in range(trials)]
    )
    k = int(decisions.sum())
    low, high = wilson_interval(k, trials)
    return DetectionEstimate(
        p_d=k / trials, ci_low=low, ci_high=high, trials=trials, decisions=decisions
    )
