"""Monte Carlo locking probability, threshold fits and threshold scaling laws.

Fluctuations enter only through the initial condition: each trajectory starts
from a Gaussian draw in (q, j) around the drive-following state at the start
of the chirp and is then integrated deterministically.
Draws are counter based (Philox), so sample ``k`` of stream ``s`` depends on
``(seed, s, k)`` alone and results do not depend on how work is split up.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
from scipy import optimize, special

from . import dynamics
from .dynamics import ChirpProfile, OscState
from .errors import (BracketError, FitError, InsufficientCoverageError,
                     InvalidParameterError, NumericalBlowupError)
from .units import (K_B, DimensionlessParams, PhysicalParams, effective_temperature,
                    reduce)

#: Threshold shift prefactor quoted for the experiment.
KAPPA = 0.245
#: Default Monte Carlo step; the force is smooth and 0.05 matches 0.01 on thresholds.
MC_DTAU = 0.05
BISECT_RTOL = 1e-4
MIN_FIT_COUNT = 50
MAX_FAIL_FRACTION = 1e-3
_Z95 = special.ndtri(0.975)
_CHUNK = 512


@dataclass(frozen=True)
class InitialDistribution:
    """Isotropic Gaussian of initial (q, j), variance ``variance_scale`` per quadrature."""

    variance_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.variance_scale > 0:
            raise InvalidParameterError(
                f"variance_scale must be > 0 (got {self.variance_scale})")
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidParameterError("seed must be an unsigned 64-bit integer")

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance_scale)

    @classmethod
    def from_bath(cls, T, omega, T_eff_norm, T_noise=0.0, seed=0):
        """Variance for a bath at ``T`` plus injected white noise at ``T_noise``.

        Both are measured against the temperature ``T_eff_norm`` that fixed the
        (q, j) normalisation.
        """
        var = (K_B * T_noise + K_B * effective_temperature(T, omega)) / (K_B * T_eff_norm)
        return cls(var, seed)


def sample_block(dist: InitialDistribution, start: int, count: int, stream: int = 0):
    """Samples ``start .. start+count-1`` of a stream as arrays ``(q, j)``.

    One Philox block (four 64-bit words) per sample; two words feed a
    Box-Muller pair.
    """
    bg = np.random.Philox(key=int(dist.seed) | (int(stream) << 64))
    if start:
        bg.advance(int(start))
    words = bg.random_raw(4 * int(count)).reshape(-1, 4)
    u1 = ((words[:, 0] >> np.uint64(11)).astype(float) + 1.0) * 2.0 ** -53
    u2 = (words[:, 1] >> np.uint64(11)).astype(float) * 2.0 ** -53
    r = dist.sigma * np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    return r * np.cos(theta), r * np.sin(theta)


def sample_initial(dist: InitialDistribution, k: int, stream: int = 0, tau=None) -> OscState:
    q, j = sample_block(dist, k, 1, stream)
    return OscState(float(q[0]), float(j[0]), tau)


def wilson_interval(n_locked, n_total, z=_Z95):
    """Wilson score interval for a binomial proportion."""
    if n_total <= 0:
        return 0.0, 1.0
    p = n_locked / n_total
    z2 = z * z
    denom = 1.0 + z2 / n_total
    centre = (p + z2 / (2 * n_total)) / denom
    half = z / denom * math.sqrt(p * (1 - p) / n_total + z2 / (4 * n_total * n_total))
    # clamp so round-off never pushes p outside its own interval
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


@dataclass(frozen=True)
class LockingResult:
    epsilon: float
    n_locked: int
    n_total: int
    n_failed: int = 0

    @property
    def p_hat(self) -> float:
        return self.n_locked / self.n_total if self.n_total else float("nan")

    @property
    def ci(self):
        return wilson_interval(self.n_locked, self.n_total)


@dataclass(frozen=True)
class ThresholdFit:
    eps_c: float
    s: float
    eps_c_se: float
    s_se: float
    chi2: float
    dof: int

    @property
    def width(self) -> float:
        """Inverse slope of the erf model at P = 1/2."""
        return self.s * math.sqrt(2.0 * math.pi)

    @property
    def width_se(self) -> float:
        return self.s_se * math.sqrt(2.0 * math.pi)


@dataclass
class ThresholdCurve:
    entries: List[LockingResult]
    fit: Optional[ThresholdFit] = None

    @property
    def epsilon(self):
        return np.array([e.epsilon for e in self.entries])

    @property
    def p_hat(self):
        return np.array([e.p_hat for e in self.entries])

    def rows(self):
        for e in self.entries:
            lo, hi = e.ci
            yield e.epsilon, e.n_locked, e.n_total, e.p_hat, lo, hi


# -- Monte Carlo ----------------------------------------------------------------

def _lock_count(task):
    dp, c, dist, stream, start, count, dtau = task
    q0, j0 = sample_block(dist, start, count, stream)
    rest = dynamics.forced_response(dp, c)
    q0 += rest.q
    j0 += rest.j
    qf, jf, failed_tau = dynamics.final_states(q0, j0, dp, c, dtau)
    ok = np.isnan(failed_tau)
    locked = (qf * qf + jf * jf > dynamics.lock_cut(dp, c)) & ok
    bad = failed_tau[~ok]
    return int(locked.sum()), int(bad.size), (float(bad[0]) if bad.size else None)


def _map(fn, tasks, workers):
    if workers is None or workers <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * workers))))


def _tasks(dp, c, dist, stream, n, dtau):
    return [(dp, c, dist, stream, s, min(_CHUNK, n - s), dtau) for s in range(0, n, _CHUNK)]


def _collect(eps, n, parts):
    n_locked = sum(p[0] for p in parts)
    n_failed = sum(p[1] for p in parts)
    if n_failed > MAX_FAIL_FRACTION * n:
        tau = next(p[2] for p in parts if p[2] is not None)
        raise NumericalBlowupError(
            tau, f"{n_failed}/{n} trajectories blew up at eps={eps!r} (first at tau={tau})")
    return LockingResult(float(eps), n_locked, n - n_failed, n_failed)


def locking_probability(eps, dp: DimensionlessParams, c: ChirpProfile,
                        dist: InitialDistribution, n: int, dtau=MC_DTAU, workers=1,
                        stream=0) -> LockingResult:
    """Fraction of ``n`` fluctuating initial conditions captured at drive ``eps``."""
    if n < 1:
        raise InvalidParameterError("need at least one trajectory")
    dpe = dp.with_epsilon(float(eps))
    parts = _map(_lock_count, _tasks(dpe, c, dist, stream, n, dtau), workers)
    return _collect(eps, n, parts)


def threshold_scan(eps_grid: Sequence[float], dp: DimensionlessParams, c: ChirpProfile,
                   dist: InitialDistribution, n_per_point: int, dtau=MC_DTAU,
                   workers=1) -> ThresholdCurve:
    """Locking probability on a drive grid; grid point ``i`` draws from stream ``i``."""
    grid = np.asarray(eps_grid, dtype=float)
    if grid.size < 6 or np.any(np.diff(grid) <= 0):
        raise InvalidParameterError("eps_grid must be strictly increasing with >= 6 points")
    tasks, owner = [], []
    for i, eps in enumerate(grid):
        t = _tasks(dp.with_epsilon(float(eps)), c, dist, i, n_per_point, dtau)
        tasks += t
        owner += [i] * len(t)
    parts = _map(_lock_count, tasks, workers)
    entries = []
    for i, eps in enumerate(grid):
        entries.append(_collect(eps, n_per_point, [p for p, o in zip(parts, owner) if o == i]))
    return ThresholdCurve(entries)


# -- fitting --------------------------------------------------------------------

def erf_model(eps, eps_c, s):
    return 0.5 * (1.0 + special.erf((np.asarray(eps) - eps_c) / (math.sqrt(2.0) * s)))


def fit_threshold(curve: ThresholdCurve, min_count=MIN_FIT_COUNT) -> ThresholdFit:
    """Weighted least-squares erf fit; weights are inverse Wilson variances.

    Stores the fit on ``curve`` and returns it.
    """
    used = [e for e in curve.entries if e.n_total >= min_count]
    if not used:
        raise InsufficientCoverageError(f"no grid point has n_total >= {min_count}")
    x = np.array([e.epsilon for e in used])
    p = np.array([e.p_hat for e in used])
    if not (np.any(p < 0.2) and np.any(p > 0.8)):
        raise InsufficientCoverageError(
            "curve does not span the transition (need points with p < 0.2 and p > 0.8)")
    sd = np.array([(hi - lo) / (2 * _Z95) for lo, hi in (e.ci for e in used)])
    spacing = float(np.min(np.diff(x))) if x.size > 1 else 1.0
    s_floor = 1e-6 * spacing

    if np.all((p == 0) | (p == 1)) and np.all(np.diff(p) >= 0):
        # separable step: the erf collapses onto the grid gap
        k = int(np.argmax(p == 1))
        fit = ThresholdFit(0.5 * (x[k - 1] + x[k]), s_floor, 0.5 * (x[k] - x[k - 1]),
                           0.0, 0.0, x.size - 2)
        curve.fit = fit
        return fit

    above = np.nonzero(p >= 0.5)[0]
    k = int(above[0]) if above.size else x.size - 1
    if 0 < k and p[k] > p[k - 1]:
        c0 = x[k - 1] + (0.5 - p[k - 1]) * (x[k] - x[k - 1]) / (p[k] - p[k - 1])
    else:
        c0 = x[k]
    mid = (p > 0.16) & (p < 0.84)
    s0 = max(0.5 * np.ptp(x[mid]) if mid.sum() > 1 else spacing, 10 * s_floor)

    def resid(theta):
        return (p - erf_model(x, c0 + spacing * theta[0], spacing * math.exp(theta[1]))) / sd

    start = np.array([0.0, math.log(s0 / spacing)])
    lower = [-np.inf, math.log(s_floor / spacing)]
    upper = [np.inf, math.log(100.0 * max(np.ptp(x), spacing) / spacing)]
    start[1] = min(max(start[1], lower[1]), upper[1])
    res = optimize.least_squares(resid, start, bounds=(lower, upper), method="trf",
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitError(f"erf fit did not converge: {res.message}", res.fun)
    eps_c = c0 + spacing * res.x[0]
    s = spacing * math.exp(res.x[1])
    try:
        cov = np.linalg.inv(res.jac.T @ res.jac)
        eps_c_se = spacing * math.sqrt(cov[0, 0])
        s_se = s * math.sqrt(cov[1, 1])
    except np.linalg.LinAlgError:
        eps_c_se = s_se = float("nan")
    fit = ThresholdFit(eps_c, s, eps_c_se, s_se, float(np.sum(res.fun ** 2)), x.size - 2)
    curve.fit = fit
    return fit


def threshold_grid(centre, s, n_points=10, span=2.5):
    """Drive grid of ``n_points`` covering ``centre +- span * s``."""
    return centre + s * np.linspace(-span, span, n_points)


# -- closed-form width ----------------------------------------------------------

def predicted_width_volts(p: PhysicalParams, kappa=KAPPA) -> float:
    """2 kappa sqrt(2 pi L alpha k_B T_eff)."""
    T_eff = effective_temperature(p.temperature, p.omega)
    return 2.0 * kappa * math.sqrt(2.0 * math.pi * p.inductance * p.chirp_rate * K_B * T_eff)


def predicted_width_eps(dp: DimensionlessParams, variance_scale=1.0, kappa=KAPPA) -> float:
    """Same width in drive units: 2 kappa sqrt(2 pi alpha_tilde) sigma."""
    return 2.0 * kappa * math.sqrt(2.0 * math.pi * dp.alpha_tilde * variance_scale)


# -- deterministic thresholds ---------------------------------------------------

def threshold_estimate(dp: DimensionlessParams) -> float:
    """Rough zero-fluctuation threshold, used only to open bisection brackets."""
    return 0.82 * dp.alpha_tilde ** 0.75 / math.sqrt(3.0 * dp.beta / 8.0)


def _locks(eps, dp, c, q0, j0, dtau):
    dpe = dp.with_epsilon(eps)
    rest = dynamics.forced_response(dpe, c)
    qf, jf, failed = dynamics.final_states(np.array([q0 + rest.q]), np.array([j0 + rest.j]),
                                           dpe, c, dtau)
    if not np.isnan(failed[0]):
        raise NumericalBlowupError(float(failed[0]))
    return qf[0] ** 2 + jf[0] ** 2 > dynamics.lock_cut(dp, c)


def deterministic_threshold(dp: DimensionlessParams, c: ChirpProfile, q0=0.0, j0=0.0,
                            rel_tol=BISECT_RTOL, bracket=None, dtau=MC_DTAU,
                            label=None) -> float:
    """Bisect the drive amplitude separating capture from escape for one start point.

    ``(q0, j0)`` is an offset from the drive-following state at ``c.tau_start``.
    """
    if bracket is None:
        est = threshold_estimate(dp)
        bracket = (0.25 * est, 4.0 * est)
    lo, hi = map(float, bracket)
    where = f" for {label}" if label else ""
    if _locks(lo, dp, c, q0, j0, dtau):
        raise BracketError(f"lower bracket eps={lo:.6g} already locks{where}")
    if not _locks(hi, dp, c, q0, j0, dtau):
        raise BracketError(f"upper bracket eps={hi:.6g} does not lock{where}")
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if _locks(mid, dp, c, q0, j0, dtau):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class KappaEstimate:
    """Fit of eps~_c(A0, dphi) = eps_c - kappa_raw A0 cos(dphi - phase_ref).

    ``kappa`` = kappa_raw / (2 sqrt(alpha_tilde)) is the normalisation under
    which the Gaussian-averaged shift reproduces the width
    2 kappa sqrt(2 pi alpha_tilde) sigma; ``kappa_sqrt`` = kappa_raw / sqrt(alpha_tilde)
    is listed as well.
    """

    kappa: float
    kappa_raw: float
    kappa_sqrt: float
    phase_ref: float
    eps_c: float
    A0: np.ndarray
    dphi: np.ndarray
    thresholds: np.ndarray
    max_residual: float

    @property
    def relative_residual(self) -> float:
        return self.max_residual / (self.kappa_raw * float(np.max(self.A0)))

    def shift(self, A0, dphi):
        return -self.kappa_raw * A0 * np.cos(np.asarray(dphi) - self.phase_ref)


def start_from_mismatch(c: ChirpProfile, A0, dphi):
    """Offset (q, j) from the drive-following state: a free oscillation of
    amplitude A0 and phase dphi relative to the drive at tau_start."""
    ph = c.phase(c.tau_start) + dphi
    return A0 * math.cos(ph), -A0 * math.sin(ph)


def kappa_estimate(dp: DimensionlessParams, c: ChirpProfile, A0_grid, dphi_grid,
                   rel_tol=BISECT_RTOL, dtau=MC_DTAU) -> KappaEstimate:
    A0_grid = np.asarray(A0_grid, dtype=float)
    dphi_grid = np.asarray(dphi_grid, dtype=float)
    eps0 = deterministic_threshold(dp, c, rel_tol=rel_tol, dtau=dtau, label="A0=0")
    bracket = (0.5 * eps0, 2.0 * eps0)
    A, D = np.meshgrid(A0_grid, dphi_grid, indexing="ij")
    thr = np.empty_like(A)
    for idx in np.ndindex(A.shape):
        q0, j0 = start_from_mismatch(c, A[idx], D[idx])
        thr[idx] = deterministic_threshold(
            dp, c, q0, j0, rel_tol, bracket, dtau,
            label=f"cell A0={A[idx]:.4g}, dphi={D[idx]:.4g}")
    a, d, y = A.ravel(), D.ravel(), thr.ravel()
    M = np.column_stack([np.ones_like(a), -a * np.cos(d), -a * np.sin(d)])
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    k_raw = math.hypot(coef[1], coef[2])
    sa = math.sqrt(dp.alpha_tilde)
    return KappaEstimate(
        kappa=k_raw / (2.0 * sa), kappa_raw=k_raw, kappa_sqrt=k_raw / sa,
        phase_ref=math.atan2(coef[2], coef[1]), eps_c=float(coef[0]),
        A0=A0_grid, dphi=dphi_grid, thresholds=thr,
        max_residual=float(np.max(np.abs(M @ coef - y))))


@dataclass(frozen=True)
class AlphaScaling:
    exponent: float
    prefactor: float
    alpha_tilde: np.ndarray
    eps_c: np.ndarray


def fit_power_law(x, y):
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(math.exp(intercept))


def alpha_scaling(alpha_list, dp: DimensionlessParams, start_scaled=dynamics.DEFAULT_START_SCALED,
                  end_scaled=dynamics.DEFAULT_END_SCALED, rel_tol=BISECT_RTOL,
                  dtau=MC_DTAU) -> AlphaScaling:
    """Zero-fluctuation thresholds versus chirp rate and their log-log slope.

    Each chirp rate uses the same window in units of 1/sqrt(alpha_tilde).
    """
    alphas = np.asarray(alpha_list, dtype=float)
    if alphas.size < 4 or alphas.max() / alphas.min() < 10 * (1 - 1e-9):
        raise InvalidParameterError("need >= 4 chirp rates spanning at least a decade")
    eps = []
    for a in alphas:
        dpa = replace(dp, alpha_tilde=float(a))
        c = ChirpProfile.default(a, start_scaled=start_scaled, end_scaled=end_scaled)
        eps.append(deterministic_threshold(dpa, c, rel_tol=rel_tol, dtau=dtau,
                                           label=f"alpha_tilde={a:.4g}"))
    eps = np.array(eps)
    slope, pref = fit_power_law(alphas, eps)
    return AlphaScaling(slope, pref, alphas, eps)


# -- temperature dependence -----------------------------------------------------

SCALED_WIDTH_EXPR = "width_volts**2 / (8 * kappa**2 * pi * L * alpha * k_B)"


@dataclass
class SweepRow:
    T: float
    T_noise: float
    T_eff: float
    variance_scale: float
    eps_c: float
    width_eps: float
    width_eps_se: float
    width_volts: float
    scaled_width_sq: float
    predicted_width_volts: float
    curve: ThresholdCurve = field(repr=False)


@dataclass
class SweepResult:
    rows: List[SweepRow]
    metadata: dict


def temperature_sweep(T_list, p: PhysicalParams, noise_T_list=None, kappa=KAPPA,
                      n_per_point=2000, n_points=10, span=2.5, seed=0, dtau=MC_DTAU,
                      workers=1, chirp: Optional[ChirpProfile] = None) -> SweepResult:
    """Threshold width versus bath temperature (and optional injected noise).

    The (q, j) normalisation is frozen at the zero-temperature effective
    temperature so beta and the drive scale stay fixed; temperature then only
    changes the variance of the initial distribution.  Every row reuses the
    same random streams.
    """
    T_list = list(T_list)
    if not T_list:
        raise InvalidParameterError("empty temperature list")
    noise = list(noise_T_list) if noise_T_list else [0.0]
    p0 = p.with_temperature(0.0)
    dp = reduce(p0)
    c = chirp or ChirpProfile.default(dp.alpha_tilde)
    vscale = p.inductance * dp.q0 * p.omega ** 2
    eps0 = deterministic_threshold(dp, c, dtau=dtau, label="sweep centre")
    rows = []
    for T in T_list:
        for Tn in noise:
            dist = InitialDistribution.from_bath(T, p.omega, dp.T_eff, Tn, seed)
            s_pred = 2.0 * kappa * math.sqrt(dp.alpha_tilde) * dist.sigma
            curve = threshold_scan(threshold_grid(eps0, s_pred, n_points, span),
                                   dp, c, dist, n_per_point, dtau, workers)
            fit = fit_threshold(curve)
            wv = fit.width * vscale
            rows.append(SweepRow(
                T=float(T), T_noise=float(Tn),
                T_eff=effective_temperature(T, p.omega),
                variance_scale=dist.variance_scale, eps_c=fit.eps_c,
                width_eps=fit.width, width_eps_se=fit.width_se, width_volts=wv,
                scaled_width_sq=wv ** 2 / (8 * kappa ** 2 * math.pi * p.inductance
                                           * p.chirp_rate * K_B),
                predicted_width_volts=predicted_width_volts(p0, kappa) * dist.sigma,
                curve=curve))
    meta = {
        "scaled_width_sq": SCALED_WIDTH_EXPR,
        "kappa": kappa,
        "normalisation_T_eff": dp.T_eff,
        "beta": dp.beta,
        "alpha_tilde": dp.alpha_tilde,
        "volts_per_epsilon": vscale,
        "tau_start": c.tau_start,
        "tau_end": c.tau_end,
        "n_per_point": n_per_point,
        "seed": seed,
    }
    return SweepResult(rows, meta)


def probability_from_average(v_mean, v_low, v_high) -> float:
    """Locking probability from a sweep-averaged detector voltage, clamped to [0, 1]."""
    if not v_high > v_low:
        raise InvalidParameterError(f"need V_h > V_l (got {v_high}, {v_low})")
    return min(1.0, max(0.0, (v_mean - v_low) / (v_high - v_low)))
