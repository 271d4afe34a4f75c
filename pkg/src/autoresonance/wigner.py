"""Pseudospectral split-step solver for the Wigner function of the chirped oscillator.

Solves, on a doubly periodic (q, j) box,

    df/dtau + j df/dq - F(q, tau) df/dj = (gamma^2 beta q / 4) d^3f/dj^3,
    F(q, tau) = q - beta q^3 + eps cos(phi_d(tau)),

with Strang splitting.  Advection along q is diagonal in k_q; the force and
third-derivative terms are diagonal in k_j.  Both sub-steps are exact
unimodular Fourier multipliers, so the mass (k = 0 mode) and the L2 norm are
preserved to round-off.
"""
from __future__ import annotations

import math
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.fft as sfft
from scipy import special

from . import dynamics
from .dynamics import ChirpProfile
from .errors import (ConfigurationError, DiagnosticDivergenceError, NotSeparatedError,
                     StepSizeError)
from .units import DimensionlessParams

DEFAULT_N = 256
DEFAULT_DTAU = 0.02
MAX_DTAU = dynamics.MAX_DTAU
BOX_FACTOR = 1.6
NORM_ABORT = 1e-4
BOUNDARY_CELLS = 3
BOUNDARY_LIMIT = 1e-4
#: Time at which the preset runs end and are compared.
SNAPSHOT_TAU = 4215.0
PRESET_ALPHA = 1e-6
EXPERIMENT_BETA = 3.55e-6
EXPERIMENT_EPS = 0.0246
CLASSICAL_GAMMA = 1e-4


def _odd_wavenumbers(n, d):
    """rfft wavenumbers with the Nyquist entry set to zero.

    Odd derivatives are undefined at Nyquist; a zero wavenumber leaves that
    mode untouched, which keeps every multiplier unimodular.
    """
    k = 2.0 * np.pi * sfft.rfftfreq(n, d)
    k[-1] = 0.0
    return k


def _pow2(n):
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class PhaseSpaceGrid:
    n_q: int
    n_j: int
    q_half: float
    j_half: float

    def __post_init__(self):
        for name in ("n_q", "n_j"):
            n = getattr(self, name)
            if n < 64 or not _pow2(n):
                raise ConfigurationError(f"{name} must be a power of two >= 64 (got {n})")
        if not (self.q_half > 0 and self.j_half > 0):
            raise ConfigurationError("box half-widths must be positive")

    @classmethod
    def for_orbit(cls, dp: DimensionlessParams, tau_end, n=DEFAULT_N, factor=BOX_FACTOR,
                  min_half=8.0):
        half = max(factor * float(dynamics.locked_amplitude(dp, tau_end)), min_half)
        return cls(n, n, half, half)

    @property
    def dq(self):
        return 2.0 * self.q_half / self.n_q

    @property
    def dj(self):
        return 2.0 * self.j_half / self.n_j

    @property
    def cell_area(self):
        return self.dq * self.dj

    @property
    def q(self):
        return -self.q_half + self.dq * np.arange(self.n_q)

    @property
    def j(self):
        return -self.j_half + self.dj * np.arange(self.n_j)

    @property
    def kq(self):
        return _odd_wavenumbers(self.n_q, self.dq)

    @property
    def kj(self):
        return _odd_wavenumbers(self.n_j, self.dj)

    def contains_orbit(self, dp, tau_end, factor=BOX_FACTOR) -> bool:
        need = factor * float(dynamics.locked_amplitude(dp, tau_end))
        return self.q_half >= need and self.j_half >= need


@dataclass
class WignerState:
    f: np.ndarray
    tau: float
    grid: PhaseSpaceGrid
    gamma: float

    def integral(self, values=None):
        v = self.f if values is None else values
        return float(v.sum() * self.grid.cell_area)


def ground_state(grid: PhaseSpaceGrid, gamma_init=2.0, tau=0.0, gamma=None,
                 centre=(0.0, 0.0)) -> WignerState:
    """Gaussian (1/(pi g)) exp(-((q-q0)^2 + (j-j0)^2) / g) with g = gamma_init.

    ``gamma`` is the value used for subsequent evolution (defaults to
    ``gamma_init``); a displaced ``centre`` gives a coherent state.
    """
    if not 0 < gamma_init <= 2:
        raise ConfigurationError(f"gamma_init must lie in (0, 2] (got {gamma_init})")
    q0, j0 = centre
    sq = math.sqrt(gamma_init)
    inside_q = 0.5 * (special.erf((grid.q_half - q0) / sq) + special.erf((grid.q_half + q0) / sq))
    inside_j = 0.5 * (special.erf((grid.j_half - j0) / sq) + special.erf((grid.j_half + j0) / sq))
    tail = 1.0 - inside_q * inside_j
    if tail > 1e-8:
        raise ConfigurationError(f"box too small: Gaussian mass {tail:.2e} falls outside")
    q = grid.q[:, None] - q0
    j = grid.j[None, :] - j0
    f = np.exp(-(q * q + j * j) / gamma_init) / (math.pi * gamma_init)
    return WignerState(f, float(tau), grid, float(gamma_init if gamma is None else gamma))


def initial_state(grid: PhaseSpaceGrid, dp: DimensionlessParams, c: ChirpProfile) -> WignerState:
    """Vacuum centred on the drive-following state at the start of the chirp."""
    rest = dynamics.forced_response(dp, c)
    return ground_state(grid, 2.0, tau=c.tau_start, gamma=dp.gamma, centre=(rest.q, rest.j))


class SplitStep:
    """Precomputed Fourier multipliers for a fixed grid, parameters and step."""

    def __init__(self, grid: PhaseSpaceGrid, dp: DimensionlessParams, gamma, dtau):
        if not 0 < dtau <= MAX_DTAU:
            raise StepSizeError(f"dtau must lie in (0, {MAX_DTAU}] (got {dtau})")
        self.grid, self.dp, self.gamma, self.dtau = grid, dp, gamma, dtau
        kq, kj = grid.kq, grid.kj
        q, j = grid.q, grid.j
        self._adv_half = np.exp(-0.5j * dtau * kq[:, None] * j[None, :])
        self._adv_full = self._adv_half * self._adv_half
        F0 = q - dp.beta * q ** 3
        disp = gamma * gamma * dp.beta * q / 4.0
        self._force = np.exp(1j * dtau * (F0[:, None] * kj[None, :]
                                          - disp[:, None] * kj[None, :] ** 3))
        self._kj = kj

    def advect(self, f, half=True):
        g = sfft.rfft(f, axis=0)
        g *= self._adv_half if half else self._adv_full
        return sfft.irfft(g, n=self.grid.n_q, axis=0)

    def kick(self, f, tau_mid, c: ChirpProfile):
        drive = self.dp.epsilon * math.cos(c.phase(tau_mid))
        g = sfft.rfft(f, axis=1)
        g *= self._force
        if drive:
            g *= np.exp(1j * self.dtau * drive * self._kj)[None, :]
        return sfft.irfft(g, n=self.grid.n_j, axis=1)


def phase_step(grid: PhaseSpaceGrid, dp: DimensionlessParams, gamma, dtau):
    """Largest per-step spectral phases of the force and dispersion multipliers.

    Returns ``(max|F| k_max dtau, gamma^2 beta q_half k_max^3 dtau / 4)``.  Both
    multipliers are exact translations/dispersions, so values above pi/2 do
    not alias; they are reported as a resolution diagnostic.
    """
    kmax = math.pi / grid.dj
    q = grid.q_half
    fmax = max(abs(x - dp.beta * x ** 3) for x in (q, 1.0 / math.sqrt(3 * dp.beta) if dp.beta else q)
               if abs(x) <= q) + dp.epsilon
    disp = gamma * gamma * dp.beta * q / 4.0 * kmax ** 3 * dtau
    return fmax * kmax * dtau, disp


def step(state: WignerState, dp: DimensionlessParams, c: ChirpProfile, dtau) -> WignerState:
    """One Strang step: half advection, force/quantum kick at the midpoint, half advection."""
    ss = SplitStep(state.grid, dp, state.gamma, dtau)
    f = ss.advect(state.f)
    f = ss.kick(f, state.tau + 0.5 * dtau, c)
    f = ss.advect(f)
    return WignerState(f, state.tau + dtau, state.grid, state.gamma)


def locked_fraction(state: WignerState, dp: DimensionlessParams, c: Optional[ChirpProfile] = None) -> float:
    """Mass outside the disc A^2 <= 4 alpha_tilde tau / (3 beta) around the origin.

    The disc is the trajectory classifier's cut evaluated at ``state.tau``.
    """
    g = state.grid
    if state.tau <= 0:
        raise NotSeparatedError("locked fraction is undefined before the resonance crossing")
    r2 = dynamics.lock_cut(dp, ChirpProfile(dp.alpha_tilde, -1.0, state.tau))
    r = math.sqrt(r2)
    cell = max(g.dq, g.dj)
    if r < BOUNDARY_CELLS * cell:
        raise NotSeparatedError(f"cut radius {r:.3g} spans fewer than {BOUNDARY_CELLS} cells")
    if r > min(g.q_half, g.j_half):
        raise NotSeparatedError(f"cut radius {r:.3g} exceeds the box")
    R2 = g.q[:, None] ** 2 + g.j[None, :] ** 2
    return state.integral(np.where(R2 > r2, state.f, 0.0))


def negativity(state: WignerState):
    """(min f, integrated negative mass)."""
    neg = np.minimum(state.f, 0.0)
    return float(state.f.min()), -state.integral(neg)


def boundary_mass(state: WignerState, cells=BOUNDARY_CELLS) -> float:
    a = np.abs(state.f)
    inner = a[cells:-cells, cells:-cells].sum()
    return float((a.sum() - inner) * state.grid.cell_area)


def moments(state: WignerState):
    g = state.grid
    w = g.cell_area
    pq = state.f.sum(axis=1) * w
    pj = state.f.sum(axis=0) * w
    norm = pq.sum()
    mq = float((g.q * pq).sum() / norm)
    mj = float((g.j * pj).sum() / norm)
    vq = float(((g.q - mq) ** 2 * pq).sum() / norm)
    vj = float(((g.j - mj) ** 2 * pj).sum() / norm)
    return mq, mj, vq, vj


DIAGNOSTIC_FIELDS = ("tau", "norm", "l2", "min_f", "negative_mass", "locked_fraction",
                     "mean_q", "mean_j", "var_q", "var_j", "boundary_mass")


def diagnose(state: WignerState, dp: DimensionlessParams, c: ChirpProfile) -> dict:
    mn, neg = negativity(state)
    mq, mj, vq, vj = moments(state)
    try:
        lf = locked_fraction(state, dp, c)
    except NotSeparatedError:
        lf = float("nan")
    return dict(tau=state.tau, norm=state.integral(), l2=state.integral(state.f ** 2),
                min_f=mn, negative_mass=neg, locked_fraction=lf, mean_q=mq, mean_j=mj,
                var_q=vq, var_j=vj, boundary_mass=boundary_mass(state))


def _check(d, norm0, strict_boundary):
    if abs(d["norm"] - norm0) > NORM_ABORT:
        raise DiagnosticDivergenceError(
            f"norm drifted from {norm0:.9f} to {d['norm']:.9f} at tau={d['tau']:.6g}")
    if strict_boundary and d["boundary_mass"] > BOUNDARY_LIMIT:
        raise DiagnosticDivergenceError(
            f"mass {d['boundary_mass']:.2e} within {BOUNDARY_CELLS} cells of the box edge "
            f"at tau={d['tau']:.6g}; enlarge the box")


def evolve(state: WignerState, dp: DimensionlessParams, c: ChirpProfile, dtau,
           tau_target, every=None, check_every=2000, strict_boundary=True, callback=None):
    """Repeated Strang steps from ``state.tau`` to ``tau_target``.

    Adjacent half advections are fused.  Diagnostics are taken every
    ``every`` steps (and at the end) and returned as a dict of arrays;
    ``callback(state)`` sees the state at each diagnostic point.
    """
    span = tau_target - state.tau
    if not span > 0:
        raise ValueError(f"tau_target {tau_target} must exceed the current tau {state.tau}")
    nsteps = max(1, int(round(span / dtau)))
    h = span / nsteps
    ss = SplitStep(state.grid, dp, state.gamma, h)
    tau0 = state.tau
    norm0 = state.integral()
    grid, gamma = state.grid, state.gamma
    every = int(every) if every else 0
    records = []

    def boundary_state(f, i):
        return WignerState(f, tau0 + i * h, grid, gamma)

    if every:
        s0 = boundary_state(state.f, 0)
        records.append(diagnose(s0, dp, c))
        if callback:
            callback(s0)
    f = ss.advect(state.f)
    for i in range(nsteps):
        f = ss.kick(f, tau0 + (i + 0.5) * h, c)
        done = i + 1
        at_diag = every and done % every == 0
        at_check = check_every and done % check_every == 0
        if done == nsteps or at_diag or at_check:
            f = ss.advect(f)
            s = boundary_state(f, done)
            if done == nsteps or at_diag:
                d = diagnose(s, dp, c)
                if every or done == nsteps:
                    records.append(d)
                if callback and (at_diag or done == nsteps):
                    callback(s)
            else:
                d = dict(tau=s.tau, norm=s.integral(), boundary_mass=boundary_mass(s))
            _check(d, norm0, strict_boundary)
            if done < nsteps:
                f = ss.advect(f)
        else:
            f = ss.advect(f, half=False)
    final = WignerState(f, tau0 + nsteps * h, grid, gamma)
    diags = {k: np.array([r[k] for r in records]) for k in DIAGNOSTIC_FIELDS}
    return final, diags


# -- presets --------------------------------------------------------------------

@dataclass(frozen=True)
class WignerPreset:
    name: str
    n: int
    gamma: float

    @property
    def params(self) -> DimensionlessParams:
        return DimensionlessParams(beta=self.n ** 2 * EXPERIMENT_BETA,
                                   epsilon=EXPERIMENT_EPS / self.n,
                                   gamma=self.gamma, alpha_tilde=PRESET_ALPHA)

    def chirp(self, tau_end=SNAPSHOT_TAU) -> ChirpProfile:
        return ChirpProfile.default(PRESET_ALPHA, tau_end=tau_end)

    def grid(self, n=DEFAULT_N, tau_end=SNAPSHOT_TAU) -> PhaseSpaceGrid:
        return PhaseSpaceGrid.for_orbit(self.params, tau_end, n)


PRESETS = {
    "n10": WignerPreset("n10", 10, 2.0),
    "n7": WignerPreset("n7", 7, 2.0),
    "n5": WignerPreset("n5", 5, 2.0),
    "classical": WignerPreset("classical", 5, CLASSICAL_GAMMA),
}


def run_preset(name, n=DEFAULT_N, dtau=DEFAULT_DTAU, tau_end=SNAPSHOT_TAU, every=None,
               callback=None, gamma=None, strict_boundary=True):
    """Evolve the vacuum through the chirp for one of the named parameter sets."""
    pre = PRESETS[name]
    dp = pre.params
    if gamma is not None:
        dp = DimensionlessParams(dp.beta, dp.epsilon, gamma, dp.alpha_tilde)
    c = pre.chirp(tau_end)
    grid = PhaseSpaceGrid.for_orbit(dp, tau_end, n)
    s0 = initial_state(grid, dp, c)
    return evolve(s0, dp, c, dtau, tau_end, every=every, callback=callback,
                  strict_boundary=strict_boundary) + (dp, c)


# -- snapshot I/O ---------------------------------------------------------------

SNAPSHOT_FIELDS = ("n_q", "n_j", "q_half", "j_half", "tau", "gamma", "beta", "epsilon",
                   "alpha_tilde")


def export_snapshot(state: WignerState, path, dp: DimensionlessParams):
    """Write an ``.npz`` container with grid metadata and row-major float64 ``data``.

    Zip entries carry a fixed timestamp so equal states give equal bytes.
    """
    path = Path(path)
    g = state.grid
    arrays = dict(n_q=np.int64(g.n_q), n_j=np.int64(g.n_j), q_half=np.float64(g.q_half),
                  j_half=np.float64(g.j_half), tau=np.float64(state.tau),
                  gamma=np.float64(state.gamma), beta=np.float64(dp.beta),
                  epsilon=np.float64(dp.epsilon), alpha_tilde=np.float64(dp.alpha_tilde),
                  data=np.ascontiguousarray(state.f, dtype=np.float64))
    try:
        with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
            for name, value in arrays.items():
                info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
                with zf.open(info, "w", force_zip64=True) as fh:
                    np.lib.format.write_array(fh, np.asanyarray(value), allow_pickle=False)
    except OSError as exc:
        raise OSError(f"cannot write snapshot {path}: {exc}") from exc
    return path


def import_snapshot(path):
    """Inverse of :func:`export_snapshot`; returns ``(state, params)``."""
    path = Path(path)
    try:
        with np.load(path) as z:
            meta = {k: z[k].item() for k in SNAPSHOT_FIELDS}
            data = z["data"].copy()
    except OSError as exc:
        raise OSError(f"cannot read snapshot {path}: {exc}") from exc
    grid = PhaseSpaceGrid(int(meta["n_q"]), int(meta["n_j"]), meta["q_half"], meta["j_half"])
    dp = DimensionlessParams(meta["beta"], meta["epsilon"], meta["gamma"], meta["alpha_tilde"])
    return WignerState(data, meta["tau"], grid, meta["gamma"]), dp


def write_csv(state: WignerState, path):
    """Plot-friendly ``q,j,f`` table, one row per grid point."""
    g = state.grid
    Q, J = np.meshgrid(g.q, g.j, indexing="ij")
    table = np.column_stack([Q.ravel(), J.ravel(), state.f.ravel()])
    np.savetxt(path, table, delimiter=",", header="q,j,f", comments="", fmt="%.17g")
    return Path(path)
