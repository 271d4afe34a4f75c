"""INI-style run configuration.

Example::

    [circuit]
    preset = 6GHz
    temperature_mK = 15
    chirp_MHz_per_us = 50.6

    [experiment]
    n_per_point = 2000

Unit-suffixed keys mean exactly ``value * unit`` (``inductance_nH = 2.3`` is
``2.3 * 1e-9`` H).  Unknown keys are errors, and every problem in a file is
reported at once.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from .errors import ConfigurationError, InvalidParameterError
from .units import TWO_PI, DimensionlessParams, PhysicalParams, preset

# key -> SI multiplier (angular where the unit is a frequency)
CIRCUIT_KEYS = {
    "inductance_nH": 1e-9,
    "critical_current_uA": 1e-6,
    "resonance_GHz": TWO_PI * 1e9,
    "quality": 1.0,
    "temperature_mK": 1e-3,
    "chirp_MHz_per_us": TWO_PI * 1e12,
}
_CIRCUIT_FIELDS = {
    "inductance_nH": "inductance",
    "critical_current_uA": "critical_current",
    "resonance_GHz": "omega",
    "quality": "quality",
    "temperature_mK": "temperature",
    "chirp_MHz_per_us": "chirp_rate",
}
DIMENSIONLESS_KEYS = {"beta", "gamma", "alpha_tilde", "variance_scale", "epsilon"}
CHIRP_KEYS = {"tau_start", "tau_end", "start_scaled", "end_scaled"}
EXPERIMENT_KEYS = {
    "seed", "dtau", "n_per_point", "n_points", "span", "epsilon", "epsilon_grid",
    "drive_nV", "q0", "j0", "sample_every", "kappa", "a0_grid", "dphi_count",
    "alpha_list", "temperatures_mK", "noise_temperatures_mK", "preset", "grid",
    "until", "snapshot_every", "variance_scale",
}
OUTPUT_KEYS = {"directory", "formats"}
SECTIONS = {
    "circuit": set(CIRCUIT_KEYS) | {"preset"},
    "dimensionless": DIMENSIONLESS_KEYS,
    "chirp": CHIRP_KEYS,
    "experiment": EXPERIMENT_KEYS,
    "output": OUTPUT_KEYS,
}
_UNIT_STEMS = {
    "inductance": "inductance_nH",
    "critical_current": "critical_current_uA",
    "resonance": "resonance_GHz",
    "temperature": "temperature_mK",
    "chirp": "chirp_MHz_per_us",
    "temperatures": "temperatures_mK",
    "noise_temperatures": "noise_temperatures_mK",
    "drive": "drive_nV",
}
_STRING_KEYS = {"preset", "directory", "formats", "tau_start", "tau_end", "epsilon_grid"}
_LIST_KEYS = {"a0_grid", "alpha_list", "temperatures_mK", "noise_temperatures_mK",
              "epsilon_grid"}
_INT_KEYS = {"seed", "n_per_point", "n_points", "sample_every", "dphi_count", "grid",
             "snapshot_every"}


@dataclass
class RunConfig:
    circuit: Optional[PhysicalParams] = None
    dimensionless: Optional[Dict[str, float]] = None
    chirp: Dict[str, object] = field(default_factory=dict)
    experiment: Dict[str, object] = field(default_factory=dict)
    output: Dict[str, object] = field(default_factory=dict)
    raw: Dict[str, Dict[str, str]] = field(default_factory=dict)

    @property
    def seed(self) -> Optional[int]:
        return self.experiment.get("seed")

    def echo(self) -> dict:
        """Parsed values, suitable for JSON."""
        out = {}
        if self.circuit is not None:
            p = self.circuit
            out["circuit"] = {
                "inductance": p.inductance, "critical_current": p.critical_current,
                "omega": p.omega, "quality": p.quality, "temperature": p.temperature,
                "chirp_rate": p.chirp_rate,
            }
        if self.dimensionless is not None:
            out["dimensionless"] = dict(self.dimensionless)
        out["chirp"] = dict(self.chirp)
        out["experiment"] = dict(self.experiment)
        out["output"] = dict(self.output)
        return out

    def dimensionless_params(self, epsilon=None) -> DimensionlessParams:
        from .units import reduce

        if self.circuit is not None:
            dp = reduce(self.circuit)
            return dp.with_epsilon(epsilon if epsilon is not None else dp.epsilon)
        if self.dimensionless is None:
            raise ConfigurationError("config needs a [circuit] or a [dimensionless] section")
        d = self.dimensionless
        return DimensionlessParams(
            beta=d["beta"], epsilon=d.get("epsilon", 0.0) if epsilon is None else epsilon,
            gamma=d.get("gamma", 2.0), alpha_tilde=d["alpha_tilde"])


def _number(text, key, errors, integer=False):
    try:
        value = int(text, 0) if integer else float(text)
    except ValueError:
        errors.append(f"{key}: expected {'an integer' if integer else 'a number'}, got {text!r}")
        return None
    if not integer and not math.isfinite(value):
        errors.append(f"{key}: value must be finite")
        return None
    return value


def _unknown_key_message(section, key):
    stem = key.rsplit("_", 1)[0] if "_" in key else key
    for candidate in (key, stem, stem.rsplit("_", 1)[0]):
        want = _UNIT_STEMS.get(candidate)
        if want and want in SECTIONS[section] and want != key:
            return f"[{section}] {key}: unit suffix mismatch, expected {want!r}"
    return f"[{section}] unknown key {key!r}"


def _parse_value(section, key, text, errors):
    name = f"[{section}] {key}"
    if key in _LIST_KEYS:
        if key == "epsilon_grid" and text.strip() == "auto":
            return "auto"
        items = [t for t in text.replace(";", ",").split(",") if t.strip()]
        vals = [_number(t.strip(), name, errors) for t in items]
        return None if None in vals else vals
    if key in ("tau_start", "tau_end"):
        return "auto" if text.strip() == "auto" else _number(text, name, errors)
    if key in _STRING_KEYS:
        return text.strip()
    return _number(text, name, errors, integer=key in _INT_KEYS)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError([f"malformed config: {exc}"]) from None
    errors: List[str] = []
    parsed: Dict[str, Dict[str, object]] = {}
    raw: Dict[str, Dict[str, str]] = {}
    for section in cp.sections():
        if section not in SECTIONS:
            errors.append(f"unknown section [{section}]")
            continue
        raw[section] = dict(cp[section])
        vals = {}
        for key, text_value in cp[section].items():
            if key not in SECTIONS[section]:
                errors.append(_unknown_key_message(section, key))
                continue
            v = _parse_value(section, key, text_value, errors)
            if v is not None:
                vals[key] = v
        parsed[section] = vals

    if "circuit" in parsed and "dimensionless" in parsed:
        errors.append("sections [circuit] and [dimensionless] are mutually exclusive; "
                      "give exactly one")

    cfg = RunConfig(raw=raw)
    if "circuit" in parsed:
        cfg.circuit = _build_circuit(parsed["circuit"], errors)
    if "dimensionless" in parsed:
        d = parsed["dimensionless"]
        missing = {"beta", "alpha_tilde"} - set(d)
        if missing:
            errors.append(f"[dimensionless] missing keys: {sorted(missing)}")
        cfg.dimensionless = d
    cfg.chirp = parsed.get("chirp", {})
    cfg.experiment = parsed.get("experiment", {})
    cfg.output = parsed.get("output", {})
    seed = cfg.experiment.get("seed")
    if seed is not None and not 0 <= seed < 2 ** 64:
        errors.append("[experiment] seed must be an unsigned 64-bit integer")
    if errors:
        raise ConfigurationError(errors)
    return cfg


def _build_circuit(vals, errors) -> Optional[PhysicalParams]:
    kwargs = {_CIRCUIT_FIELDS[k]: v * CIRCUIT_KEYS[k] for k, v in vals.items()
              if k in CIRCUIT_KEYS}
    name = vals.get("preset")
    try:
        if name is not None:
            return preset(name, **kwargs)
        missing = [k for k in ("inductance_nH", "critical_current_uA", "resonance_GHz",
                               "quality") if k not in vals]
        if missing:
            errors.append(f"[circuit] missing keys {missing} (or give a preset)")
            return None
        return PhysicalParams(**kwargs)
    except InvalidParameterError as exc:
        errors.append(f"[circuit] {exc}")
        return None
