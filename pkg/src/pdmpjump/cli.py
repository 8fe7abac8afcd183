"""Command-line entry point.

Every subcommand writes ``manifest.json`` next to its outputs.  Usage errors
exit with status 2, domain and I/O errors with status 1; in both cases a JSON
object ``{"error": ..., "message": ...}`` goes to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .adaptive import ProjectionParams, adaptive_curve
from .errors import PDMPError, UsageError
from .estimators import EstimateCurve, estimate_curve
from .experiments import ExperimentConfig, grid_from_spec, run_bench
from .model import attach_rate, growth_model, tcp_model
from .realdata import (
    METHODS,
    TABLE_BANDWIDTHS,
    REFERENCE,
    estimate_division_rate,
    extract_embedded,
    fit_slopes,
    fitted_model,
    load_lineages,
    synthetic_growth_rate,
    validate_posterior,
)
from .simulate import sample_grid, simulate_chain, trajectory_from_arrays
from .theory import theory_table


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise UsageError(f"grid must be start:stop:step, got {text!r}") from exc
    return grid_from_spec((start, stop, step))


def _write_manifest(out_dir: Path, args, outputs, started, status="ok", error=None):
    config = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    config = json.loads(json.dumps(config, default=str))
    manifest = {
        "subcommand": args.command,
        "config": config,
        "config_hash": hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest(),
        "seed": config.get("seed"),
        "version": __version__,
        "backend": BACKEND,
        "outputs": [str(p) for p in outputs],
        "wall_clock_seconds": round(time.perf_counter() - started, 6),
        "status": status,
    }
    if error is not None:
        manifest["error"] = error
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _model(args):
    if args.model == "tcp":
        return tcp_model(args.kappa)
    base = growth_model(args.theta, args.ratio_mean, args.ratio_sd)
    return attach_rate(base, synthetic_growth_rate(args.theta))


def _add_model_flags(p):
    p.add_argument("--model", choices=("tcp", "growth"), default="tcp")
    p.add_argument("--kappa", type=float, default=0.4)
    p.add_argument("--theta", type=float, default=0.025)
    p.add_argument("--ratio-mean", type=float, default=0.5)
    p.add_argument("--ratio-sd", type=float, default=0.04)
    p.add_argument("--z0", type=float, default=1.0)


def _add_chain_flags(p):
    _add_model_flags(p)
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trajectory", type=Path, help="reuse a trajectory CSV instead of simulating")


def _chain(args, model):
    if args.trajectory is None:
        return simulate_chain(model, args.z0, args.n, args.seed)
    data = np.loadtxt(args.trajectory, delimiter=",", skiprows=1, ndmin=2)
    z = np.concatenate([[args.z0], data[:, 1]])
    return trajectory_from_arrays(z, data[:, 2], data[:, 3], label=str(args.trajectory))


def cmd_theory(args):
    grid = _grid(args.grid)
    tab = theory_table(grid, args.kappa)
    cols = ["x", "mu", "mu_ct", "mu_minus", "sigma_k", "sigma_ks", "sigma_amg"]
    np.savetxt(args.out, np.column_stack([tab[c] for c in cols]), delimiter=",",
               header=",".join(cols), comments="", fmt="%.17g")
    return [args.out]


def cmd_simulate(args):
    model = _model(args)
    traj = simulate_chain(model, args.z0, args.n, args.seed)
    traj.to_csv(args.out)
    outputs = [args.out]
    if args.grid_out is not None:
        g = sample_grid(model, traj, args.grid_dt)
        g.to_csv(args.grid_out, exponentiate=args.model == "growth")
        outputs.append(args.grid_out)
    return outputs


def cmd_estimate(args):
    model = _model(args)
    traj = _chain(args, model)
    if args.estimator in ("k", "ks"):
        if args.bandwidth is None:
            raise UsageError(f"--bandwidth is required for {args.estimator}")
        bw = args.bandwidth
    else:
        if args.bandwidth_s is None or args.bandwidth_t is None:
            raise UsageError(f"--bandwidth-s and --bandwidth-t are required for {args.estimator}")
        bw = (args.bandwidth_s, args.bandwidth_t)
    curve = estimate_curve(traj, _grid(args.grid), args.estimator, bw, model)
    curve.to_csv(args.out)
    return [args.out]


def cmd_adaptive(args):
    model = _model(args)
    traj = _chain(args, model)
    params = ProjectionParams(a=args.a, b=args.b, M_bar=args.mbar, c=args.c)
    curve, fit = adaptive_curve(traj, _grid(args.grid), f"adaptive_{args.estimator}", model, params)
    curve.to_csv(args.out)
    fit_path = Path(args.out).parent / "fit.json"
    fit_path.write_text(json.dumps(fit.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return [args.out, fit_path]


def cmd_bench(args):
    config = ExperimentConfig.from_json(args.config)
    _, written = run_bench(config, args.out, jobs=args.jobs)
    return written


def _pipeline(args):
    records = load_lineages(args.input)
    slopes = fit_slopes(records)
    data = extract_embedded(records)
    return records, slopes, data


def cmd_realdata(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, slopes, data = _pipeline(args)
    method = args.method.replace("-", "_")
    defaults = TABLE_BANDWIDTHS[args.temp]
    if method == "ks":
        bw = args.bandwidth if args.bandwidth is not None else defaults["ks"]
    elif method == "amg":
        bw = (args.bandwidth_s if args.bandwidth_s is not None else defaults["amg"][0],
              args.bandwidth_t if args.bandwidth_t is not None else defaults["amg"][1])
    else:
        bw = None
    grid = _grid(args.grid) if args.grid else None
    curve = estimate_division_rate(data, slopes.theta, method, bw, grid, temp=args.temp)
    observed = np.concatenate([r.size for r in records])
    report = validate_posterior(fitted_model(data, slopes.theta), curve, observed, args.seed,
                                x0=args.x0, n_jumps=args.jumps, last=args.last)
    summary = {
        "theta": slopes.theta,
        "cells": int(slopes.slopes.size),
        "segments_skipped": slopes.skipped,
        "divisions": data.n_divisions,
        "tau": data.tau,
        "ratio_mean": float(data.division_ratios.mean()),
        "ratio_sd": float(data.division_ratios.std(ddof=1)) if data.division_ratios.size > 1 else 0.0,
        "method": method,
        "bandwidths": bw,
        "validation_ks": report.ks_distance,
        "dropped": list(data.dropped),
        "reference": REFERENCE[args.temp],
    }
    paths = [out / "theta.json", out / "chain.csv", out / "rate_curve.csv", out / "validation.csv"]
    paths[0].write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    data.to_csv(paths[1])
    curve.to_csv(paths[2])
    report.to_csv(paths[3])
    return paths


def cmd_validate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records, slopes, data = _pipeline(args)
    theta = args.theta if args.theta is not None else slopes.theta
    tab = np.genfromtxt(args.rate_curve, delimiter=",", names=True)
    failed = tab["failed"].astype(bool) | np.isnan(tab["estimate"])
    curve = EstimateCurve(grid=tab["x"], values=np.where(failed, np.nan, tab["estimate"]),
                          estimator_kind="tabulated", bandwidths=(), n=0,
                          failures=tuple(int(i) for i in np.flatnonzero(failed)))
    observed = np.concatenate([r.size for r in records])
    report = validate_posterior(fitted_model(data, theta), curve, observed, args.seed,
                                x0=args.x0, n_jumps=args.jumps, last=args.last)
    paths = [out / "validation.csv", out / "validation.json"]
    report.to_csv(paths[0])
    paths[1].write_text(json.dumps({"ks_distance": report.ks_distance, "theta": theta, "seed": args.seed},
                                   indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def _add_validation_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--x0", type=float, default=1.5, help="starting log-size")
    p.add_argument("--jumps", type=int, default=1000)
    p.add_argument("--last", type=int, default=10000)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pdmpjump", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("theory", help="densities and asymptotic standard deviations for TCP")
    p.add_argument("--kappa", type=float, default=0.4)
    p.add_argument("--grid", default="0.1:4:0.01")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("simulate", help="simulate the embedded chain")
    _add_model_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--grid-dt", type=float, default=1.0)
    p.add_argument("--grid-out", type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="kernel jump-rate estimate on a grid")
    _add_chain_flags(p)
    p.add_argument("--estimator", choices=("k", "ks", "amgo", "amg"), required=True)
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--bandwidth-s", type=float)
    p.add_argument("--bandwidth-t", type=float)
    p.add_argument("--grid", default="0.5:2.5:0.05")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("adaptive", help="projection-based jump-rate estimate")
    _add_chain_flags(p)
    p.add_argument("--estimator", choices=("k", "ks"), required=True)
    p.add_argument("--a", type=float, default=0.05)
    p.add_argument("--b", type=float, default=3.0)
    p.add_argument("--mbar", type=int, default=25)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--grid", default="0.5:1.9:0.2")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_adaptive)

    p = sub.add_parser("bench", help="Monte-Carlo experiments from a JSON config")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, default=Path("bench_out"))
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("realdata", help="division-rate pipeline on lineage CSVs")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--temp", type=int, choices=(25, 27, 37), default=37)
    p.add_argument("--method", choices=tuple(m.replace("_", "-") for m in METHODS), default="ks")
    p.add_argument("--bandwidth", type=float)
    p.add_argument("--bandwidth-s", type=float)
    p.add_argument("--bandwidth-t", type=float)
    p.add_argument("--grid", help="log-size grid start:stop:step (default: data quantiles)")
    _add_validation_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_realdata)

    p = sub.add_parser("validate", help="compare simulated and observed size laws")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--rate-curve", type=Path, required=True)
    p.add_argument("--theta", type=float)
    _add_validation_flags(p)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def _out_dir(args) -> Path | None:
    out = getattr(args, "out", None)
    if out is None:
        return None
    out = Path(out)
    return out if args.command in ("bench", "realdata", "validate") else out.parent


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    started = time.perf_counter()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    if getattr(args, "jobs", 1) < 1:
        return _fail("UsageError", "--jobs must be >= 1", 2)
    out_dir = _out_dir(args)
    try:
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
        outputs = args.func(args)
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    except (PDMPError, OSError, ValueError) as exc:
        if out_dir is not None and out_dir.exists():
            _write_manifest(out_dir, args, [], started, status="error",
                            error={"type": type(exc).__name__, "message": str(exc)})
        return _fail(type(exc).__name__, str(exc), 1)
    _write_manifest(out_dir, args, outputs, started)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
