import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from autoresonance import threshold as th
from autoresonance import units
from autoresonance.dynamics import ChirpProfile, OscState, phase_mismatch
from autoresonance.errors import (BracketError, InsufficientCoverageError,
                                  InvalidParameterError)
from autoresonance.units import DimensionlessParams

# cheap regime: short capture time, threshold around 0.042
FAST = DimensionlessParams(beta=1e-3, epsilon=0.0, gamma=2.0, alpha_tilde=1e-4)
FAST_CHIRP = ChirpProfile.default(1e-4)


@pytest.fixture(scope="module")
def fast_eps_c():
    return th.deterministic_threshold(FAST, FAST_CHIRP)


# -- sampling ------------------------------------------------------------------

def test_vanishing_variance_gives_origin():
    s = th.sample_initial(th.InitialDistribution(1e-30, seed=3), 17)
    assert abs(s.q) < 1e-13 and abs(s.j) < 1e-13


def test_million_sample_moments():
    q, j = th.sample_block(th.InitialDistribution(1.0, seed=11), 0, 1_000_000)
    assert 0.997 <= q.var() <= 1.003
    assert 0.997 <= j.var() <= 1.003
    assert abs(np.mean(q * j)) < 5e-3
    # Rayleigh mean of the amplitude
    assert np.hypot(q, j).mean() == pytest.approx(math.sqrt(math.pi / 2), rel=5e-3)


def test_samples_are_pure_functions_of_counter():
    dist = th.InitialDistribution(2.0, seed=2 ** 63 + 5)
    q, j = th.sample_block(dist, 1000, 5, stream=3)
    for i in range(5):
        s = th.sample_initial(dist, 1000 + i, stream=3)
        assert (s.q, s.j) == (q[i], j[i])
    again = th.sample_initial(dist, 1002, stream=3)
    assert (again.q, again.j) == (q[2], j[2])


def test_streams_and_seeds_differ():
    a = th.sample_block(th.InitialDistribution(1.0, seed=1), 0, 4, stream=0)[0]
    b = th.sample_block(th.InitialDistribution(1.0, seed=1), 0, 4, stream=1)[0]
    c = th.sample_block(th.InitialDistribution(1.0, seed=2), 0, 4, stream=0)[0]
    assert not np.any(a == b) and not np.any(a == c)


def test_distribution_validation():
    with pytest.raises(InvalidParameterError):
        th.InitialDistribution(0.0)
    with pytest.raises(InvalidParameterError):
        th.InitialDistribution(1.0, seed=-1)


def test_bath_variance():
    w = 2 * math.pi * 5.987e9
    t0 = units.effective_temperature(0.0, w)
    assert th.InitialDistribution.from_bath(0.0, w, t0).variance_scale == pytest.approx(1.0)
    d = th.InitialDistribution.from_bath(0.0, w, t0, T_noise=t0)
    assert d.variance_scale == pytest.approx(2.0)
    hot = th.InitialDistribution.from_bath(1.0, w, t0)
    assert hot.variance_scale == pytest.approx(units.effective_temperature(1.0, w) / t0)


# -- Wilson interval ----------------------------------------------------------------

def wilson_oracle(k, n, z=1.959963984540054):
    # roots of (phat - p)^2 = z^2 p (1 - p) / n
    ph = k / n
    a = 1 + z * z / n
    b = -(2 * ph + z * z / n)
    c = ph * ph
    r = np.sort(np.roots([a, b, c]).real)
    return r[0], r[1]


@pytest.mark.parametrize("k, n", [(0, 10), (5, 10), (10, 10), (3, 2000), (1999, 2000)])
def test_wilson_against_quadratic(k, n):
    lo, hi = th.wilson_interval(k, n)
    olo, ohi = wilson_oracle(k, n)
    assert lo == pytest.approx(max(olo, 0.0), abs=1e-12)
    assert hi == pytest.approx(min(ohi, 1.0), abs=1e-12)


@given(st.integers(1, 10 ** 6), st.data())
def test_wilson_bounds(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = th.wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


# -- fitting -----------------------------------------------------------------------

def synthetic_curve(p_of_eps, grid, n):
    return th.ThresholdCurve([th.LockingResult(float(e), p * n, n)
                              for e, p in zip(grid, p_of_eps(grid))])


def test_exact_model_self_fit():
    grid = np.linspace(0.016, 0.024, 15)
    curve = synthetic_curve(lambda e: th.erf_model(e, 0.02, 0.001), grid, 10 ** 6)
    fit = th.fit_threshold(curve)
    assert fit.eps_c == pytest.approx(0.02, abs=1e-10 * 0.02)
    assert fit.s == pytest.approx(0.001, rel=1e-10)
    assert fit.width == pytest.approx(0.001 * math.sqrt(2 * math.pi), rel=1e-10)
    assert curve.fit is fit


def test_width_is_inverse_slope_at_half():
    h = 1e-9
    slope = (th.erf_model(0.02 + h, 0.02, 0.001) - th.erf_model(0.02 - h, 0.02, 0.001)) / (2 * h)
    fit = th.ThresholdFit(0.02, 0.001, 0, 0, 0, 1)
    assert fit.width == pytest.approx(1 / slope, rel=1e-6)


def test_binomial_noise_coverage():
    grid = np.linspace(0.017, 0.023, 12)
    truth = th.erf_model(grid, 0.02, 0.001)
    rng = np.random.default_rng(2024)
    hits = 0
    n_seeds = 200
    for _ in range(n_seeds):
        k = rng.binomial(5000, truth)
        curve = th.ThresholdCurve([th.LockingResult(float(e), int(x), 5000)
                                   for e, x in zip(grid, k)])
        fit = th.fit_threshold(curve)
        hits += abs(fit.eps_c - 0.02) <= 3 * fit.eps_c_se
    assert hits / n_seeds >= 0.95


def test_standard_error_matches_bootstrap_spread():
    grid = np.linspace(0.017, 0.023, 12)
    truth = th.erf_model(grid, 0.02, 0.001)
    rng = np.random.default_rng(7)
    est, se = [], []
    for _ in range(200):
        k = rng.binomial(5000, truth)
        fit = th.fit_threshold(th.ThresholdCurve(
            [th.LockingResult(float(e), int(x), 5000) for e, x in zip(grid, k)]))
        est.append(fit.eps_c)
        se.append(fit.eps_c_se)
    assert np.std(est) == pytest.approx(np.median(se), rel=0.25)


def test_step_data_does_not_crash():
    grid = np.linspace(0.01, 0.03, 9)
    curve = synthetic_curve(lambda e: (e > 0.021).astype(float), grid, 1000)
    fit = th.fit_threshold(curve)
    spacing = grid[1] - grid[0]
    assert fit.width < spacing
    assert grid[4] < fit.eps_c < grid[5]


def test_non_spanning_curve_rejected():
    grid = np.linspace(0.016, 0.019, 8)
    curve = synthetic_curve(lambda e: th.erf_model(e, 0.02, 0.001), grid, 1000)
    with pytest.raises(InsufficientCoverageError):
        th.fit_threshold(curve)


def test_small_counts_excluded():
    grid = np.linspace(0.016, 0.024, 10)
    curve = synthetic_curve(lambda e: th.erf_model(e, 0.02, 0.001), grid, 20)
    with pytest.raises(InsufficientCoverageError):
        th.fit_threshold(curve)


def test_threshold_grid():
    g = th.threshold_grid(1.0, 0.1, 6, 2.5)
    assert g[0] == pytest.approx(0.75) and g[-1] == pytest.approx(1.25) and len(g) == 6


# -- closed-form width ---------------------------------------------------------------

def test_width_temperature_ratio():
    p = units.preset("6GHz")
    w1 = th.predicted_width_volts(p.with_temperature(0.05))
    w2 = th.predicted_width_volts(p.with_temperature(0.7))
    ratio = math.sqrt(units.effective_temperature(0.05, p.omega)
                      / units.effective_temperature(0.7, p.omega))
    assert w1 / w2 == pytest.approx(ratio, rel=1e-12)


def test_width_chirp_scaling():
    p = units.preset("6GHz")
    w1 = th.predicted_width_volts(p.with_chirp_MHz_per_us(10.0))
    w2 = th.predicted_width_volts(p.with_chirp_MHz_per_us(40.0))
    assert w2 / w1 == pytest.approx(2.0, rel=1e-12)


def test_width_regression_pin():
    p = units.preset("6GHz").with_chirp_MHz_per_us(50.6)
    # independent evaluation with exact SI constants
    hbar, kb = 6.62607015e-34 / (2 * math.pi), 1.380649e-23
    T_eff = hbar * 2 * math.pi * 5.987e9 / (2 * kb)
    direct = 2 * 0.245 * math.sqrt(2 * math.pi * 2.3e-9 * 2 * math.pi * 50.6e12 * kb * T_eff)
    got = th.predicted_width_volts(p)
    assert got == pytest.approx(direct, rel=1e-12)
    assert got == pytest.approx(1.47922e-9, rel=1e-5)


def test_width_units_agree():
    p = units.preset("6GHz").with_chirp_MHz_per_us(50.6)
    dp = units.reduce(p)
    volts = th.predicted_width_volts(p)
    assert volts / units.voltage_scale(p) == pytest.approx(th.predicted_width_eps(dp),
                                                           rel=1e-12)
    assert th.predicted_width_eps(dp, 4.0) == pytest.approx(2 * th.predicted_width_eps(dp))


# -- Monte Carlo -------------------------------------------------------------------------

def test_no_drive_never_locks():
    r = th.locking_probability(0.0, FAST, FAST_CHIRP, th.InitialDistribution(1.0), 300)
    assert r.n_locked == 0 and r.p_hat == 0.0


def test_double_threshold_always_locks(fast_eps_c):
    r = th.locking_probability(2 * fast_eps_c, FAST, FAST_CHIRP,
                               th.InitialDistribution(1.0), 300)
    lo, hi = r.ci
    assert lo <= 1.0 <= hi
    assert r.p_hat == 1.0


def test_locking_probability_validation():
    with pytest.raises(InvalidParameterError):
        th.locking_probability(0.01, FAST, FAST_CHIRP, th.InitialDistribution(1.0), 0)


def test_scan_far_below_and_above(fast_eps_c):
    dist = th.InitialDistribution(1.0, seed=4)
    below = th.threshold_scan(np.linspace(0.2, 0.5, 6) * fast_eps_c, FAST, FAST_CHIRP,
                              dist, 200)
    above = th.threshold_scan(np.linspace(1.5, 2.0, 6) * fast_eps_c, FAST, FAST_CHIRP,
                              dist, 200)
    assert np.all(below.p_hat < 0.05)
    assert np.all(above.p_hat > 0.95)


def test_scan_grid_validation():
    dist = th.InitialDistribution(1.0)
    with pytest.raises(InvalidParameterError):
        th.threshold_scan([0.01, 0.02, 0.03], FAST, FAST_CHIRP, dist, 10)
    with pytest.raises(InvalidParameterError):
        th.threshold_scan([0.01, 0.02, 0.02, 0.03, 0.04, 0.05], FAST, FAST_CHIRP, dist, 10)


def test_scan_independent_of_worker_count(fast_eps_c):
    dist = th.InitialDistribution(1.0, seed=99)
    grid = th.threshold_grid(fast_eps_c, 0.01, 6)
    one = th.threshold_scan(grid, FAST, FAST_CHIRP, dist, 1100, workers=1)
    two = th.threshold_scan(grid, FAST, FAST_CHIRP, dist, 1100, workers=2)
    assert list(one.rows()) == list(two.rows())


def test_fluctuation_free_limit_matches_bisection(fast_eps_c):
    grid = fast_eps_c * np.linspace(0.99, 1.01, 11)
    curve = th.threshold_scan(grid, FAST, FAST_CHIRP, th.InitialDistribution(1e-12), 60)
    fit = th.fit_threshold(curve)
    assert abs(fit.eps_c - fast_eps_c) <= grid[1] - grid[0]


def test_fitted_threshold_is_half_probability(fast_eps_c):
    # small spread: the threshold shift stays linear in the start offset, so the
    # probability curve is an erf (at unit variance this regime is visibly skewed)
    dist = th.InitialDistribution(0.01, seed=5)
    grid = th.threshold_grid(fast_eps_c, 0.0005, 10)
    fit = th.fit_threshold(th.threshold_scan(grid, FAST, FAST_CHIRP, dist, 1000))
    n = 4000
    r = th.locking_probability(fit.eps_c, FAST, FAST_CHIRP, dist, n, stream=77)
    # fit uncertainty mapped to probability through the slope at p = 1/2
    se_fit = fit.eps_c_se / fit.width
    se = math.sqrt(se_fit ** 2 + 0.25 / n)
    assert abs(r.p_hat - 0.5) < 3 * se


@pytest.mark.slow
def test_base_scan_is_monotone():
    dp = DimensionlessParams(beta=3.55e-6, epsilon=0.0, gamma=2.0, alpha_tilde=1e-6)
    c = ChirpProfile.default(1e-6)
    eps_c = th.deterministic_threshold(dp, c)
    s = 2 * th.KAPPA * math.sqrt(1e-6)
    curve = th.threshold_scan(th.threshold_grid(eps_c, s, 6, 2.5), dp, c,
                              th.InitialDistribution(1.0, seed=1), 2000)
    for a, b in zip(curve.entries, curve.entries[1:]):
        # nondecreasing up to the overlap of the two confidence intervals
        assert b.ci[1] >= a.ci[0]
    assert curve.p_hat[-1] > curve.p_hat[0]


# -- deterministic thresholds, kappa, scaling -----------------------------------------------

def test_bracket_error_names_cell():
    with pytest.raises(BracketError, match="cell X"):
        th.deterministic_threshold(FAST, FAST_CHIRP, bracket=(1.0, 2.0), label="cell X")
    with pytest.raises(BracketError):
        th.deterministic_threshold(FAST, FAST_CHIRP, bracket=(1e-4, 2e-4))


def test_bisection_tolerance(fast_eps_c):
    lo = th._locks(fast_eps_c * (1 - 2e-4), FAST, FAST_CHIRP, 0.0, 0.0, th.MC_DTAU)
    hi = th._locks(fast_eps_c * (1 + 2e-4), FAST, FAST_CHIRP, 0.0, 0.0, th.MC_DTAU)
    assert not lo and hi


def test_threshold_scales_as_inverse_root_beta(fast_eps_c):
    four = th.deterministic_threshold(replace(FAST, beta=4 * FAST.beta), FAST_CHIRP)
    assert four == pytest.approx(fast_eps_c / 2, rel=2e-4)


def test_start_phase_convention():
    c = FAST_CHIRP
    q, j = th.start_from_mismatch(c, 2.0, 0.3)
    assert math.hypot(q, j) == pytest.approx(2.0)
    assert phase_mismatch(OscState(q, j, c.tau_start), c) == pytest.approx(0.3)


@pytest.fixture(scope="module")
def fast_kappa():
    return th.kappa_estimate(FAST, FAST_CHIRP, [0.0, 0.25, 0.5],
                             np.linspace(0, 2 * math.pi, 8, endpoint=False))


def test_zero_amplitude_row_is_flat(fast_kappa):
    row = fast_kappa.thresholds[0]
    assert np.ptp(row) <= 1e-6 * row.mean()


def test_quadrature_start_barely_shifts(fast_kappa):
    k = fast_kappa
    A0 = 0.5
    eps_in = th.deterministic_threshold(FAST, FAST_CHIRP,
                                        *th.start_from_mismatch(FAST_CHIRP, A0, k.phase_ref))
    eps_q = th.deterministic_threshold(
        FAST, FAST_CHIRP, *th.start_from_mismatch(FAST_CHIRP, A0, k.phase_ref + math.pi / 2))
    base = th.deterministic_threshold(FAST, FAST_CHIRP)
    assert abs(eps_q - base) < 0.1 * abs(eps_in - base)


def test_linear_shift_model_residual(fast_kappa):
    assert fast_kappa.relative_residual < 0.10
    assert fast_kappa.kappa == pytest.approx(fast_kappa.kappa_raw / (2 * math.sqrt(1e-4)))
    assert fast_kappa.kappa_sqrt == pytest.approx(2 * fast_kappa.kappa)


def test_power_law_fit_invariant_under_rescaling():
    x = np.array([1e-6, 3e-6, 1e-5, 3e-5])
    y = 0.3 * x ** 0.74 * (1 + 0.01 * np.array([1, -1, 1, -1]))
    s1, p1 = th.fit_power_law(x, y)
    s2, p2 = th.fit_power_law(x, 2 * y)
    assert s1 == pytest.approx(s2, rel=1e-12)
    assert p2 == pytest.approx(2 * p1)


def test_alpha_scaling_validation():
    with pytest.raises(InvalidParameterError):
        th.alpha_scaling([1e-4, 2e-4, 4e-4], FAST)
    with pytest.raises(InvalidParameterError):
        th.alpha_scaling([1e-4, 2e-4, 4e-4, 8e-4], FAST)


def test_alpha_scaling_fast_regime():
    res = th.alpha_scaling([1e-4, 2e-4, 5e-4, 1e-3], FAST)
    assert res.exponent == pytest.approx(0.75, abs=0.05)
    assert np.all(np.diff(res.eps_c) > 0)


# -- temperature sweep ----------------------------------------------------------------------

def test_temperature_sweep_structure():
    # 1.6 GHz stand-in circuit with a fast chirp keeps this cheap
    p = units.preset("1.6GHz")
    omega2 = p.omega ** 2
    p = units.PhysicalParams(p.inductance, p.critical_current, p.omega, p.quality,
                             chirp_rate=1e-4 * omega2)
    res = th.temperature_sweep([0.0, 0.2], p, n_per_point=300, n_points=8, seed=3)
    assert [r.T for r in res.rows] == [0.0, 0.2]
    r0, r1 = res.rows
    assert r0.variance_scale == pytest.approx(1.0)
    assert r1.variance_scale > 4
    assert r1.width_eps > r0.width_eps
    assert res.metadata["scaled_width_sq"] == th.SCALED_WIDTH_EXPR
    dp0 = units.reduce(p)
    assert r0.width_volts == pytest.approx(r0.width_eps * units.voltage_scale(p))
    expected = r0.width_volts ** 2 / (8 * th.KAPPA ** 2 * math.pi * p.inductance
                                      * p.chirp_rate * units.K_B)
    assert r0.scaled_width_sq == pytest.approx(expected)
    assert res.metadata["beta"] == dp0.beta


def test_temperature_sweep_rejects_empty():
    with pytest.raises(InvalidParameterError):
        th.temperature_sweep([], units.preset("6GHz"))


# -- detector helper ----------------------------------------------------------------------

@pytest.mark.parametrize("v, expected", [(1.0, 0.0), (3.0, 1.0), (2.0, 0.5), (0.0, 0.0),
                                         (5.0, 1.0)])
def test_probability_from_average(v, expected):
    assert th.probability_from_average(v, 1.0, 3.0) == expected


def test_probability_from_average_rejects():
    with pytest.raises(InvalidParameterError):
        th.probability_from_average(1.0, 2.0, 2.0)
