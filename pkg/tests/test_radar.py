import numpy as np
import pytest

from jcas.errors import JcasError
from jcas.geometry import Direction, half_wavelength_array, steering_vector
from jcas.propagation import RadarTarget, complex_normal, make_radar_target
from jcas.beamforming import BeamformerSet, pbr_beamformer
from jcas.radar import (
    DelayDopplerGrid,
    build_tx_grid,
    calibrate_threshold,
    detection_probability,
    echo_deviation,
    echo_synthesize,
    glrt_detect,
    glrt_statistic,
    h0_max_statistics,
    natural_grid,
    ofdm_params,
    per_cell_powers,
    project_tx,
    projected_rx,
    qpsk_symbols,
    surface_from_projection,
    wilson_interval,
)

from conftest import glrt_statistic_oracle

GEOM = half_wavelength_array(4, 2, 0.1)
PARAMS = ofdm_params(m_sub=32, n_sym=8, delta_f=30e3, cp_fraction=1.0 / 4.0)
DIR = Direction(0.2, np.deg2rad(40))


def random_beams(rng, k_users=2, kind="pbr"):
    comm = complex_normal(rng, (k_users, GEOM.n_elements))
    comm /= np.linalg.norm(comm, axis=1, keepdims=True)
    return BeamformerSet(comm=comm, radar=pbr_beamformer(GEOM, DIR), radar_kind=kind)


def on_grid_target(params, delay_cells, doppler_cells, range_gain=1.0, speed=None):
    delay = delay_cells / (params.m_sub * params.delta_f)
    doppler = doppler_cells / (params.n_sym * params.t0)
    c = 299792458.0
    return RadarTarget(
        direction=DIR,
        range_m=c * delay / 2 if delay > 0 else 1.0,
        radial_speed=doppler * c / (2 * 3e9),
        rcs=0.1,
        alpha=range_gain,
        delay=delay,
        doppler=doppler,
    )


def test_ofdm_params_relations():
    assert PARAMS.t_s == pytest.approx(1 / 30e3)
    assert PARAMS.t0 == pytest.approx(PARAMS.t_cp + PARAMS.t_s)
    assert PARAMS.bandwidth == pytest.approx(32 * 30e3)
    with pytest.raises(ValueError):
        ofdm_params(0, 14, 30e3)


def test_qpsk_unit_modulus(rng):
    x = qpsk_symbols(rng, (50, 50))
    np.testing.assert_allclose(np.abs(x), 1.0, atol=1e-14)


def test_radar_only_grid(rng):
    beams = BeamformerSet(
        comm=np.zeros((0, GEOM.n_elements)), radar=pbr_beamformer(GEOM, DIR),
        radar_kind="pbr",
    )
    grid = build_tx_grid(PARAMS, beams, p_dl=0.0, p_r=3.0, rng=rng)
    eta_r = 3.0 / (PARAMS.m_sub * PARAMS.n_sym)
    norms = np.linalg.norm(grid.s, axis=2) ** 2
    np.testing.assert_allclose(norms, eta_r, rtol=1e-12)


def test_grid_average_power_bookkeeping(rng):
    p_dl, p_r = 2.0, 4.0
    beams = random_beams(rng)
    # E over symbols of sum_cells ||s||^2 = P_DL + P_R; average 300 draws
    totals = [
        np.sum(np.abs(build_tx_grid(PARAMS, beams, p_dl, p_r, rng).s) ** 2)
        for _ in range(300)
    ]
    mean = np.mean(totals)
    sem = np.std(totals, ddof=1) / np.sqrt(len(totals))
    assert abs(mean - (p_dl + p_r)) <= 3 * sem + 1e-9


def test_grid_power_split_orthogonal_beams(rng):
    # one user orthogonal to the radar beam: per-cell power adds exactly
    w_r = pbr_beamformer(GEOM, DIR)
    w_1 = complex_normal(rng, GEOM.n_elements)
    w_1 -= w_r * np.vdot(w_r, w_1)
    w_1 /= np.linalg.norm(w_1)
    beams = BeamformerSet(comm=w_1[None, :], radar=w_r, radar_kind="pbr")
    p_dl, p_r = 1.0, 2.0
    grid = build_tx_grid(PARAMS, beams, p_dl, p_r, rng)
    cells = PARAMS.m_sub * PARAMS.n_sym
    np.testing.assert_allclose(
        np.linalg.norm(grid.s, axis=2) ** 2,
        p_dl / cells + p_r / cells,
        rtol=1e-12,
    )


def test_negative_power_rejected(rng):
    with pytest.raises(ValueError):
        per_cell_powers(-1.0, 1.0, 2, PARAMS)


def test_project_tx_matches_full_grid(rng):
    beams = random_beams(rng)
    a = steering_vector(GEOM, DIR)
    state = rng.bit_generator.state
    grid = build_tx_grid(PARAMS, beams, 2.0, 4.0, rng)
    b_full = np.einsum("a,nma->nm", a.conj(), grid.s)
    rng.bit_generator.state = state  # same symbol draws
    b_fast = project_tx(beams, PARAMS, 2.0, 4.0, a, rng)
    np.testing.assert_allclose(b_fast, b_full, atol=1e-12)


def test_echo_alpha_zero_pure_noise(rng):
    grid = build_tx_grid(PARAMS, random_beams(rng), 2.0, 4.0, rng)
    target = on_grid_target(PARAMS, 1, 0, range_gain=0.0)
    state = rng.bit_generator.state
    y = echo_synthesize(grid, target, GEOM, 0.5, rng)
    rng.bit_generator.state = state
    noise = complex_normal(rng, y.shape, variance=0.5)
    np.testing.assert_allclose(y, noise, atol=1e-14)


def test_echo_noise_free_zero_delay_doppler(rng):
    grid = build_tx_grid(PARAMS, random_beams(rng), 2.0, 4.0, rng)
    target = on_grid_target(PARAMS, 0, 0, range_gain=2.0)
    y = echo_synthesize(grid, target, GEOM, 0.0, rng)
    a = steering_vector(GEOM, DIR)
    expect = 2.0 * np.einsum("a,nmb,b->nma", a, grid.s, a.conj())
    np.testing.assert_allclose(y, expect, atol=1e-12)


def test_echo_delay_beyond_cp_rejected(rng):
    grid = build_tx_grid(PARAMS, random_beams(rng), 2.0, 4.0, rng)
    target = on_grid_target(PARAMS, 0, 0)
    object.__setattr__(target, "delay", PARAMS.t_cp * 1.01)
    with pytest.raises(JcasError):
        echo_synthesize(grid, target, GEOM, 0.0, rng)
    # exact mode has no CP restriction
    echo_synthesize(grid, target, GEOM, 0.0, rng, mode="exact")


def test_exact_equals_approx_at_zero_doppler(rng):
    grid = build_tx_grid(PARAMS, random_beams(rng), 2.0, 4.0, rng)
    for delay_cells in (0, 1, 5):
        target = on_grid_target(PARAMS, delay_cells, 0)
        y_ap = echo_synthesize(grid, target, GEOM, 0.0, rng)
        y_ex = echo_synthesize(grid, target, GEOM, 0.0, rng, mode="exact")
        rel = np.linalg.norm(y_ex - y_ap) / np.linalg.norm(y_ap)
        assert rel <= 1e-9


def test_exact_mode_against_direct_sum(rng):
    # brute-force Eq-form oracle: per (n, m) sum over subcarriers, then DFT
    params = ofdm_params(m_sub=8, n_sym=3, delta_f=30e3, cp_fraction=0.25)
    beams = random_beams(rng)
    grid = build_tx_grid(params, beams, 2.0, 4.0, rng)
    a = steering_vector(GEOM, DIR)
    nu, tau = 0.013 * params.delta_f, 0.7 * params.t_cp
    target = RadarTarget(
        direction=DIR, range_m=100.0, radial_speed=1.0, rcs=0.1,
        alpha=1.7 - 0.3j, delay=tau, doppler=nu,
    )
    y = echo_synthesize(grid, target, GEOM, 0.0, rng, mode="exact")
    m_sub, n_sym = params.m_sub, params.n_sym
    h_t = target.alpha * np.outer(a, a.conj())
    ytilde = np.zeros((n_sym, m_sub, GEOM.n_elements), dtype=complex)
    for n in range(n_sym):
        for m in range(m_sub):
            acc = np.zeros(GEOM.n_elements, dtype=complex)
            for ell in range(m_sub):
                acc += (
                    grid.s[n, ell]
                    * np.exp(2j * np.pi * m / m_sub * (nu / params.delta_f + ell))
                    * np.exp(-2j * np.pi * ell * params.delta_f * tau)
                )
            ytilde[n, m] = np.exp(2j * np.pi * nu * n * params.t0) * (h_t @ acc)
    oracle = np.zeros_like(ytilde)
    for n in range(n_sym):
        for m in range(m_sub):
            acc = np.zeros(GEOM.n_elements, dtype=complex)
            for q in range(m_sub):
                acc += ytilde[n, q] * np.exp(-2j * np.pi * m * q / m_sub)
            oracle[n, m] = acc / m_sub
    np.testing.assert_allclose(y, oracle, atol=1e-10)


def test_echo_deviation_small_and_monotone(rng):
    grid = build_tx_grid(PARAMS, random_beams(rng), 2.0, 4.0, rng)
    devs = []
    for ratio in (0.01, 0.05, 0.1):
        target = on_grid_target(PARAMS, 2, 0)
        object.__setattr__(target, "doppler", ratio * PARAMS.delta_f)
        devs.append(echo_deviation(grid, GEOM, target))
    assert devs[0] <= 0.01
    assert devs[0] < devs[1] < devs[2]


def test_statistic_self_projection(rng):
    grid = build_tx_grid(PARAMS, random_beams(rng), 2.0, 4.0, rng)
    a = steering_vector(GEOM, DIR)
    u = np.einsum("a,nmb,b->nma", a, grid.s, a.conj())  # a a^H s
    stat = glrt_statistic(u, grid, DIR, GEOM, 0.0, 0.0)
    total = np.sum(np.linalg.norm(u, axis=2) ** 2)
    assert stat == pytest.approx(total**2, rel=1e-10)


def test_statistic_phase_invariance_and_quadratic_scaling(rng):
    grid = build_tx_grid(PARAMS, random_beams(rng), 2.0, 4.0, rng)
    y = complex_normal(rng, grid.s.shape)
    s0 = glrt_statistic(y, grid, DIR, GEOM, 1e-6, 100.0)
    assert glrt_statistic(np.exp(1.3j) * y, grid, DIR, GEOM, 1e-6, 100.0) == pytest.approx(
        s0, rel=1e-12
    )
    c = 0.3 - 2.1j
    assert glrt_statistic(c * y, grid, DIR, GEOM, 1e-6, 100.0) == pytest.approx(
        abs(c) ** 2 * s0, rel=1e-12
    )


def test_statistic_matches_triple_loop_oracle(rng):
    params = ofdm_params(m_sub=8, n_sym=4, delta_f=30e3, cp_fraction=0.25)
    grid = build_tx_grid(params, random_beams(rng), 2.0, 4.0, rng)
    y = complex_normal(rng, grid.s.shape)
    v = projected_rx(y, grid, DIR, GEOM)
    delay, doppler = 0.4 * params.t_cp, 0.02 * params.delta_f
    stat = glrt_statistic(y, grid, DIR, GEOM, delay, doppler)
    oracle = glrt_statistic_oracle(v, params.t0, params.delta_f, delay, doppler)
    assert stat == pytest.approx(oracle, rel=1e-10)
    # and the vectorized surface agrees cell by cell
    dd = natural_grid(params, nu_max_ratio=0.2)
    surface = surface_from_projection(v, params, dd)
    for i, nu in enumerate(dd.dopplers):
        for j, tau in enumerate(dd.delays):
            assert surface[i, j] == pytest.approx(
                glrt_statistic_oracle(v, params.t0, params.delta_f, tau, nu), rel=1e-9
            )


def test_surface_depends_on_beams_not_estimates(rng):
    # identical w_k, w_R -> identical surface, regardless of which
    # estimation scheme produced them
    beams_a = random_beams(np.random.default_rng(55))
    beams_b = BeamformerSet(
        comm=beams_a.comm.copy(), radar=beams_a.radar.copy(), radar_kind="pbr"
    )
    dd = natural_grid(PARAMS, nu_max_ratio=0.2)
    sym_rng_a, sym_rng_b = np.random.default_rng(9), np.random.default_rng(9)
    grid_a = build_tx_grid(PARAMS, beams_a, 2.0, 4.0, sym_rng_a)
    grid_b = build_tx_grid(PARAMS, beams_b, 2.0, 4.0, sym_rng_b)
    y = complex_normal(rng, grid_a.s.shape)
    v_a = projected_rx(y, grid_a, DIR, GEOM)
    v_b = projected_rx(y, grid_b, DIR, GEOM)
    np.testing.assert_array_equal(
        surface_from_projection(v_a, PARAMS, dd),
        surface_from_projection(v_b, PARAMS, dd),
    )


def test_natural_grid_bounds():
    dd = natural_grid(PARAMS, nu_max_ratio=0.2)
    assert dd.delays[0] == 0.0
    assert dd.delays[-1] <= PARAMS.t_cp + 1e-15
    assert np.all(np.abs(dd.dopplers) <= 0.2 * PARAMS.delta_f + 1e-9)
    assert 0.0 in dd.dopplers
    steps = np.diff(dd.delays)
    np.testing.assert_allclose(steps, 1.0 / (PARAMS.m_sub * PARAMS.delta_f))


def test_detect_trivial_thresholds(rng):
    grid = build_tx_grid(PARAMS, random_beams(rng), 2.0, 4.0, rng)
    dd = natural_grid(PARAMS, nu_max_ratio=0.2)
    y = complex_normal(rng, grid.s.shape)
    assert glrt_detect(y, grid, DIR, GEOM, dd, 0.0).decision == "H1"
    assert glrt_detect(y, grid, DIR, GEOM, dd, np.inf).decision == "H0"
    with pytest.raises(JcasError):
        glrt_detect(y, grid, DIR, GEOM, DelayDopplerGrid(np.array([]), np.array([])), 0.0)


def test_on_grid_argmax_recovery(rng):
    dd = natural_grid(PARAMS, nu_max_ratio=0.3)
    hits = 0
    for _ in range(20):
        grid = build_tx_grid(PARAMS, random_beams(rng), 2.0, 4.0, rng)
        j = rng.integers(0, len(dd.delays))
        i = rng.integers(0, len(dd.dopplers))
        delay_cells = round(dd.delays[j] * PARAMS.m_sub * PARAMS.delta_f)
        doppler_cells = round(dd.dopplers[i] * PARAMS.n_sym * PARAMS.t0)
        target = on_grid_target(PARAMS, delay_cells, doppler_cells)
        y = echo_synthesize(grid, target, GEOM, 0.0, rng)
        report = glrt_detect(y, grid, DIR, GEOM, dd, 0.0)
        hits += report.argmax_delay == pytest.approx(target.delay, abs=1e-15) and (
            report.argmax_doppler == pytest.approx(target.doppler, abs=1e-9)
        )
    assert hits == 20


def test_statistic_monotone_in_radar_power(rng):
    # noise-free statistic at the true cell never drops when eta_R grows
    target = on_grid_target(PARAMS, 1, 0)
    for trial in range(10):
        beams = random_beams(np.random.default_rng(100 + trial))
        stats = []
        for p_r in (1.0, 2.0, 4.0, 8.0):
            sym_rng = np.random.default_rng(7)  # same symbols each power
            grid = build_tx_grid(PARAMS, beams, 2.0, p_r, sym_rng)
            y = echo_synthesize(grid, target, GEOM, 0.0, sym_rng)
            stats.append(glrt_statistic(y, grid, DIR, GEOM, target.delay, target.doppler))
        assert all(b >= a for a, b in zip(stats, stats[1:]))


def test_h0_sampler_matches_full_synthesis_distribution(rng):
    """The reduced H0 sampler and the full antenna-domain pipeline must
    produce the same max-statistic distribution."""
    beams = random_beams(rng)
    a = steering_vector(GEOM, DIR)
    dd = natural_grid(PARAMS, nu_max_ratio=0.2)
    noise_var = 0.3
    trials = 3000

    full = np.empty(trials)
    for t in range(trials):
        grid = build_tx_grid(PARAMS, beams, 2.0, 4.0, rng)
        y = complex_normal(rng, grid.s.shape, variance=noise_var)
        v = projected_rx(y, grid, DIR, GEOM)
        full[t] = surface_from_projection(v, PARAMS, dd).max()

    reduced = h0_max_statistics(
        lambda r: project_tx(beams, PARAMS, 2.0, 4.0, a, r),
        PARAMS, GEOM.n_elements, noise_var, dd, trials, rng,
    )
    # compare medians and upper quantiles within Monte Carlo tolerance
    for q in (0.5, 0.9, 0.99):
        qa, qb = np.quantile(full, q), np.quantile(reduced, q)
        assert qa == pytest.approx(qb, rel=0.15), q


def test_threshold_scale_equivariance(rng):
    beams = random_beams(rng)
    a = steering_vector(GEOM, DIR)
    dd = natural_grid(PARAMS, nu_max_ratio=0.2)

    def threshold_at(noise_var, seed):
        def sampler(trials, r):
            return h0_max_statistics(
                lambda rr: project_tx(beams, PARAMS, 2.0, 4.0, a, rr),
                PARAMS, GEOM.n_elements, noise_var, dd, trials, r,
            )

        return calibrate_threshold(sampler, 0.01, 4000, np.random.default_rng(seed))

    base = threshold_at(0.2, 5)
    # statistic is quadratic in the noise amplitude: scaling the variance
    # by c scales the threshold by exactly c at matched seeds
    assert threshold_at(0.4, 5) == pytest.approx(2 * base, rel=1e-9)
    assert threshold_at(0.8, 5) == pytest.approx(4 * base, rel=1e-9)


def test_calibrate_threshold_guards(rng):
    sampler = lambda trials, r: r.uniform(0, 1, trials)
    with pytest.raises(JcasError):
        calibrate_threshold(sampler, 1e-3, 1000, rng)  # tail unresolvable
    assert calibrate_threshold(sampler, 1.0, 1000, rng) == 0.0
    with pytest.raises(ValueError):
        calibrate_threshold(sampler, 0.0, 1000, rng)


def test_recalibrated_pfa_within_band(rng):
    beams = random_beams(rng)
    a = steering_vector(GEOM, DIR)
    dd = natural_grid(PARAMS, nu_max_ratio=0.2)
    noise_var = 0.25

    def sampler(trials, r):
        return h0_max_statistics(
            lambda rr: project_tx(beams, PARAMS, 2.0, 4.0, a, rr),
            PARAMS, GEOM.n_elements, noise_var, dd, trials, r,
        )

    pfa = 0.02
    threshold = calibrate_threshold(sampler, pfa, 20_000, rng)
    fresh = sampler(10_000, rng)
    measured = np.mean(fresh > threshold)
    assert abs(measured - pfa) <= 3.5 * np.sqrt(pfa * (1 - pfa) / 10_000)


def test_detection_probability_alpha_zero_matches_pfa(rng):
    beams = random_beams(rng)
    a = steering_vector(GEOM, DIR)
    dd = natural_grid(PARAMS, nu_max_ratio=0.2)
    noise_var = 0.25

    def sampler(trials, r):
        return h0_max_statistics(
            lambda rr: project_tx(beams, PARAMS, 2.0, 4.0, a, rr),
            PARAMS, GEOM.n_elements, noise_var, dd, trials, r,
        )

    threshold = calibrate_threshold(sampler, 0.05, 10_000, rng)
    target = on_grid_target(PARAMS, 1, 0, range_gain=0.0)  # alpha = 0

    def trial(r, thr):
        grid = build_tx_grid(PARAMS, beams, 2.0, 4.0, r)
        y = echo_synthesize(grid, target, GEOM, noise_var, r)
        return glrt_detect(y, grid, DIR, GEOM, dd, thr).decision == "H1"

    est = detection_probability(trial, threshold, 2000, rng)
    assert est.ci_low <= 0.05 <= est.ci_high or abs(est.p_d - 0.05) < 0.02
    assert est.ci_low <= est.p_d <= est.ci_high


def test_wilson_interval_basics():
    low, high = wilson_interval(50, 100)
    assert low < 0.5 < high
    assert wilson_interval(0, 50)[0] == 0.0
    assert wilson_interval(50, 50)[1] == 1.0
