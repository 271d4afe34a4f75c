"""Physical circuit parameters and their reduction to the dimensionless model.

The oscillator is described on the phase space of dimensionless charge ``q``
(in units of ``q0 = j0 / omega``) and current ``j`` (in units of
``j0 = sqrt(k_B T_eff / L)``).  Everything downstream runs on
:class:`DimensionlessParams`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from scipy import constants as _const

from .errors import InvalidParameterError

HBAR = _const.hbar
K_B = _const.k
E_CHARGE = _const.e
#: Reduced flux quantum hbar / 2e.
PHI0 = HBAR / (2.0 * E_CHARGE)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensionful circuit and bath description (SI units throughout).

    ``chirp_rate`` is angular (rad/s^2).  Use :meth:`with_chirp_MHz_per_us`
    or :func:`chirp_from_MHz_per_us` to set it from a frequency sweep rate.
    """

    inductance: float
    critical_current: float
    omega: float
    quality: float
    temperature: float = 0.0
    chirp_rate: float = TWO_PI * 50.6e12
    quality_internal: Optional[float] = None
    quality_external: Optional[float] = None
    critical_power: Optional[float] = None

    def __post_init__(self):
        bad = []
        if not self.inductance > 0:
            bad.append(f"inductance must be > 0 (got {self.inductance})")
        if not self.critical_current > 0:
            bad.append(f"critical_current must be > 0 (got {self.critical_current})")
        if not self.omega > 0:
            bad.append(f"omega must be > 0 (got {self.omega})")
        if not self.chirp_rate > 0:
            bad.append(f"chirp_rate must be > 0 (got {self.chirp_rate})")
        if not self.temperature >= 0:
            bad.append(f"temperature must be >= 0 (got {self.temperature})")
        if not self.quality > 1:
            bad.append(f"quality must be > 1 (got {self.quality})")
        if bad:
            raise InvalidParameterError("; ".join(bad))

    @property
    def frequency(self) -> float:
        """Linear resonance frequency in Hz."""
        return self.omega / TWO_PI

    def with_temperature(self, temperature: float) -> "PhysicalParams":
        return replace(self, temperature=temperature)

    def with_chirp_MHz_per_us(self, rate: float) -> "PhysicalParams":
        return replace(self, chirp_rate=chirp_from_MHz_per_us(rate))


@dataclass(frozen=True)
class DimensionlessParams:
    """Reduced model constants.

    ``q0``, ``j0`` and ``T_eff`` are only known when the parameters came from
    a circuit via :func:`reduce`; explicitly dimensionless runs leave them
    as ``None``.
    """

    beta: float
    epsilon: float
    gamma: float
    alpha_tilde: float
    q0: Optional[float] = field(default=None, compare=False)
    j0: Optional[float] = field(default=None, compare=False)
    T_eff: Optional[float] = field(default=None, compare=False)

    def __post_init__(self):
        bad = []
        # beta = 0 (linear oscillator) is allowed for solver checks
        if not self.beta >= 0:
            bad.append(f"beta must be >= 0 (got {self.beta})")
        if not self.alpha_tilde > 0:
            bad.append(f"alpha_tilde must be > 0 (got {self.alpha_tilde})")
        if not self.epsilon >= 0:
            bad.append(f"epsilon must be >= 0 (got {self.epsilon})")
        if not 0 < self.gamma <= 2:
            bad.append(f"gamma must lie in (0, 2] (got {self.gamma})")
        if bad:
            raise InvalidParameterError("; ".join(bad))

    def with_epsilon(self, epsilon: float) -> "DimensionlessParams":
        return replace(self, epsilon=epsilon)


def chirp_from_MHz_per_us(rate: float) -> float:
    """Angular chirp rate (rad/s^2) for a frequency sweep of ``rate`` MHz/us."""
    return TWO_PI * rate * 1e12


def zero_point_temperature(omega: float) -> float:
    """hbar*omega / (2 k_B), the T -> 0 limit of the effective temperature."""
    return HBAR * omega / (2.0 * K_B)


def effective_temperature(T: float, omega: float) -> float:
    """Quantum-corrected bath temperature (hbar w / 2 k_B) coth(hbar w / 2 k_B T)."""
    if not omega > 0:
        raise InvalidParameterError(f"omega must be > 0 (got {omega})")
    if not T >= 0:
        raise InvalidParameterError(f"temperature must be >= 0 (got {T})")
    t0 = zero_point_temperature(omega)
    if T == 0:
        return t0
    x = t0 / T
    # coth(x) = (1 + exp(-2x)) / (1 - exp(-2x)); expm1 keeps the high-T end exact
    return t0 * (1.0 + math.exp(-2.0 * x)) / (-math.expm1(-2.0 * x))


def reduce(p: PhysicalParams, drive_voltage: float = 0.0) -> DimensionlessParams:
    if not drive_voltage >= 0:
        raise InvalidParameterError(f"drive voltage must be >= 0 (got {drive_voltage})")
    T_eff = effective_temperature(p.temperature, p.omega)
    j0 = math.sqrt(K_B * T_eff / p.inductance)
    q0 = j0 / p.omega
    w2 = p.omega * p.omega
    beta = PHI0 * w2 * q0 * q0 / (6.0 * p.inductance * p.critical_current ** 3)
    return DimensionlessParams(
        beta=beta,
        epsilon=drive_voltage / (p.inductance * q0 * w2),
        gamma=HBAR * p.omega / (K_B * T_eff),
        alpha_tilde=p.chirp_rate / w2,
        q0=q0,
        j0=j0,
        T_eff=T_eff,
    )


def beta_from_temperature(p: PhysicalParams) -> float:
    """Anharmonicity via Phi0 k_B T_eff / (6 L^2 I0^3); independent of the q0 route."""
    T_eff = effective_temperature(p.temperature, p.omega)
    return PHI0 * K_B * T_eff / (6.0 * p.inductance ** 2 * p.critical_current ** 3)


def voltage_scale(p: PhysicalParams) -> float:
    """L q0 omega^2: volts per unit of dimensionless drive."""
    dp = reduce(p)
    return p.inductance * dp.q0 * p.omega ** 2


def drive_voltage(p: PhysicalParams, epsilon: float) -> float:
    """Inverse of the epsilon map in :func:`reduce`."""
    if not epsilon >= 0:
        raise InvalidParameterError(f"epsilon must be >= 0 (got {epsilon})")
    return epsilon * voltage_scale(p)


PRESETS = {
    "6GHz": PhysicalParams(
        inductance=2.3e-9,
        critical_current=1.8e-6,
        omega=TWO_PI * 5.987e9,
        quality=8230.0,
        quality_internal=17200.0,
        quality_external=15800.0,
        critical_power=10 ** (-123 / 10) * 1e-3,
    ),
    # Only the frequency is known for this device; L, I0 and Q are stand-ins
    # borrowed from the 6 GHz circuit, so only scaling checks are meaningful.
    "1.6GHz": PhysicalParams(
        inductance=2.3e-9,
        critical_current=1.8e-6,
        omega=TWO_PI * 1.6e9,
        quality=8230.0,
    ),
}


def preset(name: str, **overrides) -> PhysicalParams:
    try:
        base = PRESETS[name]
    except KeyError:
        raise InvalidParameterError(
            f"unknown circuit preset {name!r}; choose from {sorted(PRESETS)}"
        ) from None
    return replace(base, **overrides) if overrides else base
