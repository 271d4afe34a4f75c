"""Classical trajectories of the chirped Duffing oscillator.

Equations of motion (dimensionless time ``tau = omega t``)::

    dq/dtau = j
    dj/dtau = -q + beta q^3 - eps cos(phi_d(tau)) - damping j

with drive phase ``phi_d = tau - alpha_tilde tau^2 / 2``, so the drive frequency
``1 - alpha_tilde tau`` crosses the linear resonance at ``tau = 0``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .errors import InvalidParameterError, NumericalBlowupError
from .units import DimensionlessParams

#: Chirp window in units of the capture time 1/sqrt(alpha_tilde).
DEFAULT_START_SCALED = -10.0
DEFAULT_END_SCALED = 10.0
DEFAULT_DTAU = 0.01
MAX_DTAU = 0.05


class Lock(enum.Enum):
    LOCKED = "Locked"
    UNLOCKED = "Unlocked"

    def __bool__(self):
        return self is Lock.LOCKED


@dataclass(frozen=True)
class ChirpProfile:
    alpha_tilde: float
    tau_start: float
    tau_end: float

    def __post_init__(self):
        if not self.alpha_tilde > 0:
            raise InvalidParameterError(f"alpha_tilde must be > 0 (got {self.alpha_tilde})")
        if not self.tau_start < 0 < self.tau_end:
            raise InvalidParameterError(
                f"need tau_start < 0 < tau_end (got {self.tau_start}, {self.tau_end})"
            )

    @classmethod
    def default(cls, alpha_tilde, tau_end=None, start_scaled=DEFAULT_START_SCALED,
                end_scaled=DEFAULT_END_SCALED):
        """Window ``[start_scaled, end_scaled] / sqrt(alpha_tilde)`` unless ``tau_end`` is given."""
        s = math.sqrt(alpha_tilde)
        if tau_end is None:
            tau_end = end_scaled / s
        return cls(alpha_tilde, start_scaled / s, tau_end)

    def phase(self, tau):
        return tau - 0.5 * self.alpha_tilde * tau * tau

    def frequency(self, tau):
        return 1.0 - self.alpha_tilde * tau

    def start_detuning_ok(self, quality=None) -> bool:
        """Whether the sweep starts far above resonance.

        With a quality factor the start detuning must exceed 20 linewidths
        (20/Q); otherwise 10 sqrt(alpha_tilde), i.e. ten capture bandwidths.
        """
        need = 20.0 / quality if quality else 10.0 * math.sqrt(self.alpha_tilde)
        # tolerate rounding of the default window which sits exactly on the bound
        return abs(self.alpha_tilde * self.tau_start) >= need * (1 - 1e-12)

    def require_far_detuned(self, quality=None):
        if not self.start_detuning_ok(quality):
            raise InvalidParameterError(
                f"chirp starts too close to resonance: alpha_tilde*|tau_start| = "
                f"{abs(self.alpha_tilde * self.tau_start):.3g}"
            )


@dataclass(frozen=True)
class OscState:
    q: float
    j: float
    tau: Optional[float] = None

    @property
    def amplitude(self) -> float:
        return math.hypot(self.q, self.j)


@dataclass(frozen=True)
class Trace:
    tau: np.ndarray
    q: np.ndarray
    j: np.ndarray
    phase_mismatch: np.ndarray


@dataclass(frozen=True)
class Outcome:
    classification: Lock
    final_state: OscState
    final_amplitude: float
    history: Optional[Trace] = None

    @property
    def locked(self) -> bool:
        return self.classification is Lock.LOCKED


def energy(q, j, beta):
    return 0.5 * j * j + 0.5 * q * q - 0.25 * beta * q ** 4


def locked_amplitude(dp: DimensionlessParams, tau):
    """Adiabatic phase-locked amplitude sqrt(8 alpha_tilde tau / (3 beta))."""
    return np.sqrt(8.0 * dp.alpha_tilde * np.asarray(tau, dtype=float) / (3.0 * dp.beta))


def forced_response(dp: DimensionlessParams, c: ChirpProfile, tau=None) -> OscState:
    """Steady drive-following state of the linear oscillator at ``tau`` (default: start).

    Far from resonance this is where an oscillator sits after the drive has
    been on for a long time.  Starting there instead of at the origin avoids a
    spurious free oscillation of amplitude ~eps / |1 - w_d^2| from switching
    the drive on abruptly.
    """
    tau = c.tau_start if tau is None else tau
    w = c.frequency(tau)
    den = 1.0 - w * w
    if abs(den) < 1e-12:
        raise InvalidParameterError(f"no forced response at resonance (tau={tau})")
    ph = c.phase(tau)
    return OscState(-dp.epsilon * math.cos(ph) / den, dp.epsilon * w * math.sin(ph) / den, tau)


def derivative(s: OscState, dp: DimensionlessParams, c: ChirpProfile, damping=0.0, tau=None):
    tau = s.tau if tau is None else tau
    drive = dp.epsilon * math.cos(c.phase(tau))
    return s.j, -s.q + dp.beta * s.q ** 3 - drive - damping * s.j


@numba.njit(cache=True)
def _drive_cos(tau, at):
    return math.cos(tau - 0.5 * at * tau * tau)


@numba.njit(cache=True)
def _rk4(q, j, beta, eps, at, damping, ts, h, nsteps, every, hist):
    """Fixed-step RK4.  Returns (q, j, failed_step) with failed_step = -1 on success."""
    c0 = _drive_cos(ts, at)
    nrec = 0
    if every > 0:
        hist[0, 0] = ts
        hist[0, 1] = q
        hist[0, 2] = j
        nrec = 1
    for i in range(nsteps):
        tau = ts + i * h
        cm = _drive_cos(tau + 0.5 * h, at)
        c1 = _drive_cos(ts + (i + 1) * h, at)
        k1q = j
        k1j = -q + beta * q * q * q - eps * c0 - damping * j
        qq = q + 0.5 * h * k1q
        jj = j + 0.5 * h * k1j
        k2q = jj
        k2j = -qq + beta * qq * qq * qq - eps * cm - damping * jj
        qq = q + 0.5 * h * k2q
        jj = j + 0.5 * h * k2j
        k3q = jj
        k3j = -qq + beta * qq * qq * qq - eps * cm - damping * jj
        qq = q + h * k3q
        jj = j + h * k3j
        k4q = jj
        k4j = -qq + beta * qq * qq * qq - eps * c1 - damping * jj
        q = q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q)
        j = j + h / 6.0 * (k1j + 2.0 * k2j + 2.0 * k3j + k4j)
        c0 = c1
        if not (math.isfinite(q) and math.isfinite(j)):
            return q, j, i + 1
        if every > 0 and (i + 1) % every == 0:
            hist[nrec, 0] = ts + (i + 1) * h
            hist[nrec, 1] = q
            hist[nrec, 2] = j
            nrec += 1
    return q, j, -1


@numba.njit(cache=True)
def _rk4_batch(q0, j0, beta, eps, at, damping, ts, h, nsteps):
    n = q0.shape[0]
    qf = np.empty(n)
    jf = np.empty(n)
    failed = np.empty(n, dtype=np.int64)
    hist = np.empty((0, 3))
    for k in range(n):
        q, j, fail = _rk4(q0[k], j0[k], beta, eps, at, damping, ts, h, nsteps, 0, hist)
        qf[k] = q
        jf[k] = j
        failed[k] = fail
    return qf, jf, failed


def _step_plan(tau0, tau1, dtau):
    if not 0 < dtau <= MAX_DTAU:
        raise InvalidParameterError(f"dtau must lie in (0, {MAX_DTAU}] (got {dtau})")
    nsteps = max(1, int(round((tau1 - tau0) / dtau)))
    return nsteps, (tau1 - tau0) / nsteps


def integrate(initial: OscState, dp: DimensionlessParams, c: ChirpProfile,
              dtau=DEFAULT_DTAU, damping=0.0, sample_every=None) -> Outcome:
    """Advance ``initial`` to ``c.tau_end`` and classify the run.

    ``initial.tau`` defaults to ``c.tau_start``.  The step actually used is
    ``span / round(span / dtau)`` so that the run ends exactly on ``tau_end``.
    ``sample_every`` records ``(tau, q, j)`` every that many steps.
    """
    tau0 = c.tau_start if initial.tau is None else initial.tau
    if not tau0 < c.tau_end:
        raise InvalidParameterError(f"start tau {tau0} is not before tau_end {c.tau_end}")
    nsteps, h = _step_plan(tau0, c.tau_end, dtau)
    every = int(sample_every or 0)
    hist = np.empty((nsteps // every + 1 if every else 0, 3))
    q, j, fail = _rk4(float(initial.q), float(initial.j), dp.beta, dp.epsilon,
                      dp.alpha_tilde, float(damping), tau0, h, nsteps, every, hist)
    if fail >= 0:
        raise NumericalBlowupError(tau0 + fail * h)
    final = OscState(q, j, c.tau_end)
    trace = None
    if every:
        t, qs, js = hist.T.copy()
        trace = Trace(t, qs, js, phase_mismatch_array(qs, js, c, t))
    return Outcome(classify(final, dp, c), final, math.hypot(q, j), trace)


def final_states(q0, j0, dp: DimensionlessParams, c: ChirpProfile, dtau=DEFAULT_DTAU,
                 damping=0.0):
    """Vectorised :func:`integrate` for many initial conditions at ``c.tau_start``.

    Returns ``(q, j, failed_tau)``; ``failed_tau`` is NaN for finite runs.
    """
    nsteps, h = _step_plan(c.tau_start, c.tau_end, dtau)
    q0 = np.ascontiguousarray(q0, dtype=float)
    j0 = np.ascontiguousarray(j0, dtype=float)
    qf, jf, failed = _rk4_batch(q0, j0, dp.beta, dp.epsilon, dp.alpha_tilde,
                                float(damping), c.tau_start, h, nsteps)
    failed_tau = np.where(failed >= 0, c.tau_start + failed * h, np.nan)
    return qf, jf, failed_tau


def lock_cut(dp: DimensionlessParams, c: ChirpProfile) -> float:
    """Squared amplitude separating the classes: half the adiabatic locked action.

    A linear oscillator (beta = 0) has no locked orbit, so the cut is infinite.
    """
    if dp.beta == 0:
        return math.inf
    return 4.0 * dp.alpha_tilde * c.tau_end / (3.0 * dp.beta)


def classify(final: OscState, dp: DimensionlessParams, c: ChirpProfile) -> Lock:
    a2 = final.q * final.q + final.j * final.j
    return Lock.LOCKED if a2 > lock_cut(dp, c) else Lock.UNLOCKED


def _wrap(x):
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


def phase_mismatch(s: OscState, c: ChirpProfile, tau=None) -> float:
    """Oscillator phase atan2(-j, q) minus the drive phase, wrapped to (-pi, pi]."""
    tau = s.tau if tau is None else tau
    if s.q == 0 and s.j == 0:
        return 0.0
    return float(_wrap(math.atan2(-s.j, s.q) - c.phase(tau)))


def phase_mismatch_array(q, j, c: ChirpProfile, tau):
    q = np.asarray(q, dtype=float)
    j = np.asarray(j, dtype=float)
    out = _wrap(np.arctan2(-j, q) - c.phase(np.asarray(tau, dtype=float)))
    return np.where((q == 0) & (j == 0), 0.0, out)
