"""Command line entry point: ``autoresonance <subcommand> [--config FILE] ...``.

Each run writes CSV tables and JSON sidecars into ``--out`` and finishes by
writing ``manifest.json``; its presence (with ``"status": "complete"``) marks a
finished run.  Exit codes: 0 success, 2 config error, 3 numerical failure,
4 I/O failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import secrets
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, dynamics, threshold, units, wigner
from .config import RunConfig, parse_config
from .dynamics import ChirpProfile, OscState
from .errors import AutoresonanceError, ConfigurationError, InvalidParameterError

log = logging.getLogger("autoresonance")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4
COMMANDS = ("convert", "trajectory", "scan", "kappa", "alpha-scaling", "temp-sweep", "wigner")
DEFAULT_ALPHAS = [0.25e-6, 0.5e-6, 1e-6, 2e-6, 4e-6]
DEFAULT_TEMPS_mK = [15.0, 50.0, 100.0, 200.0, 500.0, 1000.0]


class Run:
    """Output directory bookkeeping for one invocation."""

    def __init__(self, cfg: RunConfig, command, out_dir, seed, workers):
        self.cfg, self.command, self.seed, self.workers = cfg, command, seed, workers
        self.out = Path(out_dir)
        self.started = datetime.now(timezone.utc).isoformat()

    def path(self, name):
        return self.out / name

    def write_csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                            for v in row])

    def write_json(self, name, results):
        doc = {"command": self.command, "version": __version__, "seed": self.seed,
               "config": self.cfg.echo(), "results": results}
        with open(self.path(name), "w") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def manifest(self, status, error=None):
        files = []
        for p in sorted(self.out.rglob("*")):
            if p.is_file() and p.name != "manifest.json":
                files.append({"path": str(p.relative_to(self.out)), "bytes": p.stat().st_size,
                              "sha256": hashlib.sha256(p.read_bytes()).hexdigest()})
        doc = {"command": self.command, "version": __version__, "seed": self.seed,
               "workers": self.workers, "config": self.cfg.echo(), "status": status,
               "started": self.started,
               "finished": datetime.now(timezone.utc).isoformat(), "outputs": files}
        if error:
            doc["error"] = error
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return doc


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if math.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    return x


# -- helpers shared by commands ---------------------------------------------------

def _chirp(cfg: RunConfig, dp, tau_end_default=None) -> ChirpProfile:
    ch = cfg.chirp
    start_s = ch.get("start_scaled", dynamics.DEFAULT_START_SCALED)
    end_s = ch.get("end_scaled", dynamics.DEFAULT_END_SCALED)
    c = ChirpProfile.default(dp.alpha_tilde, tau_end=tau_end_default,
                             start_scaled=start_s, end_scaled=end_s)
    ts = ch.get("tau_start", "auto")
    te = ch.get("tau_end", "auto")
    return ChirpProfile(dp.alpha_tilde, c.tau_start if ts == "auto" else ts,
                        c.tau_end if te == "auto" else te)


def _epsilon(cfg: RunConfig, dp):
    ex = cfg.experiment
    if "epsilon" in ex:
        return ex["epsilon"]
    if "drive_nV" in ex:
        if cfg.circuit is None:
            raise ConfigurationError("[experiment] drive_nV needs a [circuit] section")
        return units.reduce(cfg.circuit, ex["drive_nV"] * 1e-9).epsilon
    return dp.epsilon


def _variance(cfg: RunConfig):
    if "variance_scale" in cfg.experiment:
        return cfg.experiment["variance_scale"]
    if cfg.dimensionless and "variance_scale" in cfg.dimensionless:
        return cfg.dimensionless["variance_scale"]
    return 1.0


def _fit_dict(fit):
    if fit is None:
        return None
    return {"eps_c": fit.eps_c, "s": fit.s, "width": fit.width, "eps_c_se": fit.eps_c_se,
            "width_se": fit.width_se, "chi2": fit.chi2, "dof": fit.dof}


# -- commands -------------------------------------------------------------------

def cmd_convert(run: Run, args):
    cfg = run.cfg
    if cfg.circuit is None:
        raise ConfigurationError("convert needs a [circuit] section")
    p = cfg.circuit
    vd = cfg.experiment.get("drive_nV", 0.0) * 1e-9
    dp = units.reduce(p, vd)
    res = {"beta": dp.beta, "epsilon": dp.epsilon, "gamma": dp.gamma,
           "alpha_tilde": dp.alpha_tilde, "q0": dp.q0, "j0": dp.j0, "T_eff": dp.T_eff,
           "volts_per_epsilon": units.voltage_scale(p), "drive_voltage": vd,
           "predicted_width_volts": threshold.predicted_width_volts(p),
           "predicted_width_eps": threshold.predicted_width_eps(dp)}
    run.write_json("convert.json", res)
    return res


def cmd_trajectory(run: Run, args):
    cfg = run.cfg
    dp = cfg.dimensionless_params()
    dp = dp.with_epsilon(_epsilon(cfg, dp))
    c = _chirp(cfg, dp)
    ex = cfg.experiment
    every = args.sample_every or ex.get("sample_every", 100)
    # q0, j0 are offsets from the drive-following state, as in the Monte Carlo
    rest = dynamics.forced_response(dp, c)
    start = OscState(rest.q + ex.get("q0", 0.0), rest.j + ex.get("j0", 0.0))
    out = dynamics.integrate(start, dp, c, dtau=ex.get("dtau", dynamics.DEFAULT_DTAU),
                             sample_every=every)
    h = out.history
    run.write_csv("trajectory.csv", ["tau", "q", "j", "phase_mismatch"],
                  zip(h.tau, h.q, h.j, h.phase_mismatch))
    res = {"classification": out.classification.value, "final_amplitude": out.final_amplitude,
           "final_q": out.final_state.q, "final_j": out.final_state.j,
           "epsilon": dp.epsilon, "tau_start": c.tau_start, "tau_end": c.tau_end,
           "start_q": start.q, "start_j": start.j}
    run.write_json("trajectory.json", res)
    return res


def cmd_scan(run: Run, args):
    cfg = run.cfg
    ex = cfg.experiment
    dp = cfg.dimensionless_params()
    c = _chirp(cfg, dp)
    dist = threshold.InitialDistribution(_variance(cfg), run.seed)
    dtau = ex.get("dtau", threshold.MC_DTAU)
    grid = ex.get("epsilon_grid", "auto")
    if grid == "auto":
        eps0 = threshold.deterministic_threshold(dp, c, dtau=dtau)
        s = 2 * ex.get("kappa", threshold.KAPPA) * math.sqrt(dp.alpha_tilde) * dist.sigma
        grid = threshold.threshold_grid(eps0, s, ex.get("n_points", 10), ex.get("span", 2.5))
    curve = threshold.threshold_scan(grid, dp, c, dist, ex.get("n_per_point", 2000), dtau,
                                     run.workers)
    fit = threshold.fit_threshold(curve)
    run.write_csv("scan.csv", ["epsilon", "n_locked", "n_total", "p_hat", "ci_lo", "ci_hi"],
                  curve.rows())
    res = {"fit": _fit_dict(fit), "variance_scale": dist.variance_scale,
           "beta": dp.beta, "alpha_tilde": dp.alpha_tilde,
           "tau_start": c.tau_start, "tau_end": c.tau_end}
    if cfg.circuit is not None:
        res["width_volts"] = fit.width * units.voltage_scale(cfg.circuit)
        res["eps_c_volts"] = fit.eps_c * units.voltage_scale(cfg.circuit)
    run.write_json("scan.json", res)
    return res


def cmd_kappa(run: Run, args):
    cfg = run.cfg
    ex = cfg.experiment
    dp = cfg.dimensionless_params()
    c = _chirp(cfg, dp)
    a0 = ex.get("a0_grid", [1.0, 2.0])
    nphi = ex.get("dphi_count", 8)
    dphi = 2 * np.pi * np.arange(nphi) / nphi
    k = threshold.kappa_estimate(dp, c, a0, dphi, dtau=ex.get("dtau", threshold.MC_DTAU))
    rows = [(A, d, k.thresholds[i, m]) for i, A in enumerate(k.A0) for m, d in enumerate(k.dphi)]
    run.write_csv("kappa.csv", ["A0", "dphi", "eps_threshold"], rows)
    res = {"kappa": k.kappa, "kappa_raw": k.kappa_raw, "kappa_sqrt_alpha": k.kappa_sqrt,
           "phase_ref": k.phase_ref, "eps_c": k.eps_c,
           "relative_residual": k.relative_residual,
           "normalisation": "kappa = kappa_raw / (2 sqrt(alpha_tilde))"}
    run.write_json("kappa.json", res)
    return res


def cmd_alpha_scaling(run: Run, args):
    cfg = run.cfg
    ex = cfg.experiment
    dp = cfg.dimensionless_params()
    alphas = ex.get("alpha_list", DEFAULT_ALPHAS)
    r = threshold.alpha_scaling(alphas, dp, start_scaled=cfg.chirp.get(
        "start_scaled", dynamics.DEFAULT_START_SCALED), end_scaled=cfg.chirp.get(
        "end_scaled", dynamics.DEFAULT_END_SCALED), dtau=ex.get("dtau", threshold.MC_DTAU))
    run.write_csv("alpha_scaling.csv", ["alpha_tilde", "eps_c"], zip(r.alpha_tilde, r.eps_c))
    res = {"exponent": r.exponent, "prefactor": r.prefactor}
    run.write_json("alpha_scaling.json", res)
    return res


def cmd_temp_sweep(run: Run, args):
    cfg = run.cfg
    ex = cfg.experiment
    if cfg.circuit is None:
        raise ConfigurationError("temp-sweep needs a [circuit] section")
    temps = [t * 1e-3 for t in ex.get("temperatures_mK", DEFAULT_TEMPS_mK)]
    noise = [t * 1e-3 for t in ex.get("noise_temperatures_mK", [])] or None
    r = threshold.temperature_sweep(
        temps, cfg.circuit, noise, kappa=ex.get("kappa", threshold.KAPPA),
        n_per_point=ex.get("n_per_point", 2000), n_points=ex.get("n_points", 10),
        span=ex.get("span", 2.5), seed=run.seed, dtau=ex.get("dtau", threshold.MC_DTAU),
        workers=run.workers)
    header = ["T", "T_noise", "T_eff", "variance_scale", "eps_c", "width_eps", "width_eps_se",
              "width_volts", "scaled_width_sq_K", "predicted_width_volts"]
    run.write_csv("temp_sweep.csv", header,
                  [(w.T, w.T_noise, w.T_eff, w.variance_scale, w.eps_c, w.width_eps,
                    w.width_eps_se, w.width_volts, w.scaled_width_sq, w.predicted_width_volts)
                   for w in r.rows])
    res = {"metadata": r.metadata,
           "rows": [{"T": w.T, "T_noise": w.T_noise, "scaled_width_sq": w.scaled_width_sq}
                    for w in r.rows]}
    run.write_json("temp_sweep.json", res)
    return res


def cmd_wigner(run: Run, args):
    cfg = run.cfg
    ex = cfg.experiment
    name = args.preset or ex.get("preset", "classical")
    if name not in wigner.PRESETS:
        raise ConfigurationError(f"unknown wigner preset {name!r}; choose from {list(wigner.PRESETS)}")
    n = args.grid or ex.get("grid", wigner.DEFAULT_N)
    dtau = args.dtau or ex.get("dtau", wigner.DEFAULT_DTAU)
    until = args.until or ex.get("until", wigner.SNAPSHOT_TAU)
    snap = args.snapshot_every or ex.get("snapshot_every")
    every = max(1, int(round(snap / dtau))) if snap else None
    written = []

    def save(state):
        if snap is None and state.tau < until - 0.5 * dtau:
            return
        tag = f"wigner_{name}_tau{state.tau:.1f}"
        wigner.export_snapshot(state, run.path(tag + ".npz"), dp)
        written.append(tag + ".npz")

    pre = wigner.PRESETS[name]
    dp = pre.params
    c = pre.chirp(until)
    grid = wigner.PhaseSpaceGrid.for_orbit(dp, until, n)
    s0 = wigner.initial_state(grid, dp, c)
    final, diags = wigner.evolve(s0, dp, c, dtau, until, every=every, callback=save,
                                 strict_boundary=not args.allow_edge_mass)
    wigner.write_csv(final, run.path(f"wigner_{name}_final.csv"))
    run.write_csv("wigner_diagnostics.csv", list(diags),
                  zip(*[diags[k] for k in diags]))
    mn, neg = wigner.negativity(final)
    force_phase, dispersion_phase = wigner.phase_step(grid, dp, dp.gamma, dtau)
    res = {"preset": name, "grid": n, "dtau": dtau, "until": until,
           "locked_fraction": wigner.locked_fraction(final, dp, c), "min_f": mn,
           "negative_mass": neg, "norm": final.integral(), "snapshots": written,
           "boundary_mass": wigner.boundary_mass(final),
           "beta": dp.beta, "epsilon": dp.epsilon, "gamma": dp.gamma,
           "alpha_tilde": dp.alpha_tilde, "tau_start": c.tau_start,
           "force_phase_per_step": force_phase, "dispersion_phase_per_step": dispersion_phase}
    run.write_json("wigner.json", res)
    return res


HANDLERS = {
    "convert": cmd_convert, "trajectory": cmd_trajectory, "scan": cmd_scan,
    "kappa": cmd_kappa, "alpha-scaling": cmd_alpha_scaling, "temp-sweep": cmd_temp_sweep,
    "wigner": cmd_wigner,
}


def run(cfg: RunConfig, command, out_dir, seed=None, workers=1, args=None):
    """Execute ``command``; returns the manifest dict.  Errors propagate after a
    manifest marked ``failed`` has been written."""
    if seed is None:
        seed = cfg.seed if cfg.seed is not None else secrets.randbits(64)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    r = Run(cfg, command, out, int(seed), workers)
    args = args or build_parser().parse_args([command])
    try:
        results = HANDLERS[command](r, args)
    except Exception as exc:
        r.manifest("failed", f"{type(exc).__name__}: {exc}")
        raise
    doc = r.manifest("complete")
    doc["results"] = results
    return doc


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI run configuration")
    common.add_argument("--seed", type=int, help="unsigned 64-bit seed")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--out", type=Path, default=Path("out"))
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="autoresonance", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "trajectory":
            sp.add_argument("--sample-every", type=int, help="record every N steps")
        if name == "wigner":
            sp.add_argument("--preset", choices=list(wigner.PRESETS))
            sp.add_argument("--grid", type=int, help="points per axis (power of two)")
            sp.add_argument("--dtau", type=float)
            sp.add_argument("--until", type=float)
            sp.add_argument("--snapshot-every", type=float, help="snapshot spacing in tau")
            sp.add_argument("--allow-edge-mass", action="store_true",
                            help="record mass near the box edge instead of aborting")
    for name in COMMANDS:
        sub.choices[name].set_defaults(sample_every=None, preset=None, grid=None, dtau=None,
                                       until=None, snapshot_every=None,
                                       allow_edge_mass=False)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        text = args.config.read_text() if args.config else ""
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        cfg = parse_config(text)
        out = args.out if args.config is None or "directory" not in cfg.output else (
            args.out if args.out != Path("out") else Path(cfg.output["directory"]))
        doc = run(cfg, args.command, out, args.seed, args.workers, args)
    except (ConfigurationError, InvalidParameterError) as exc:
        for msg in getattr(exc, "errors", [str(exc)]):
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (AutoresonanceError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps(_jsonable(doc["results"]), indent=2, sort_keys=True))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
