"""Monte-Carlo harness for the TCP model.

A bench run has three stages:

1. bandwidth search: for each replicate and sample size, the bandwidth on a
   grid minimising the integrated square error against the true rate, then
   medians across replicates;
2. evaluation with the median bandwidths on fresh replicates: estimates at a
   single point (CLT check) and absolute errors on a state grid, including
   the adaptive projection variants;
3. theory curves: asymptotic standard deviations and their crossings.

Replicate ``r`` of stage ``k`` always draws from substream ``(k, r)`` of the
configured seed, so the report does not depend on scheduling.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adaptive import ProjectionParams, adaptive_curve
from .errors import CoverageGap, DegenerateCriterion, DenominatorZero, ParameterOutOfRange
from .estimators import (
    EstimateCurve,
    estimate_curve,
    lambda_amg,
    lambda_amg_batch,
    lambda_amgo,
    lambda_amgo_batch,
    lambda_k,
    lambda_k_batch,
    lambda_ks,
    lambda_ks_batch,
)
from .model import tcp_model
from .simulate import simulate_chain
from .theory import (
    normalized_sd_curves,
    sigma_amg2,
    sigma_k2,
    sigma_ks2,
    sign_changes,
    theory_table,
)

KERNEL_KINDS = ("k", "ks", "amgo", "amg")
PAIR_KINDS = ("amgo", "amg")
ADAPTIVE_KINDS = ("adaptive_k", "adaptive_ks")
STAGES = ("bandwidth", "evaluation", "variance")
SEARCH_STAGE, EVAL_STAGE = 0, 1


def grid_from_spec(spec) -> np.ndarray:
    """``(start, stop, step)`` to the inclusive grid, rounded to kill drift."""
    start, stop, step = (float(v) for v in spec)
    if not step > 0 or stop < start:
        raise ParameterOutOfRange(f"bad grid spec {spec}")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(count), 10)


@dataclass(frozen=True)
class ExperimentConfig:
    kappa: float = 0.4
    z0: float = 1.0
    seed: int = 20240601
    replicates: int = 100
    n_values: tuple = (1000, 10000)
    estimators: tuple = KERNEL_KINDS
    adaptive: bool = True
    stages: tuple = STAGES
    ise_grid: tuple = (0.5, 2.5, 0.05)
    h_grid: tuple = (0.05, 1.0, 0.025)
    hs_grid: tuple = (0.01, 0.5, 0.01)
    ht_grid: tuple = (0.05, 1.5, 0.05)
    error_grid: tuple = (0.5, 2.5, 0.2)
    adaptive_grid: tuple = (0.5, 1.9, 0.2)
    clt_x: float = 2.0
    max_failure_fraction: float = 0.2
    projection: dict = field(default_factory=lambda: dataclasses.asdict(ProjectionParams()))
    kappa_grid: tuple = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
    sigma_grid: tuple = (0.1, 4.0, 0.01)
    # optional fixed bandwidths {str(n): {kind: h or [h_s, h_t]}} used when the search stage is skipped
    bandwidths: dict | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ParameterOutOfRange("replicates must be >= 1")
        if not self.n_values or any(int(n) < 1 for n in self.n_values):
            raise ParameterOutOfRange("n_values must be nonempty positive counts")
        for kind in self.estimators:
            if kind not in KERNEL_KINDS:
                raise ParameterOutOfRange(f"unknown estimator {kind!r}")
        for stage in self.stages:
            if stage not in STAGES:
                raise ParameterOutOfRange(f"unknown stage {stage!r}")
        if "evaluation" in self.stages and "bandwidth" not in self.stages and not self.bandwidths:
            raise ParameterOutOfRange("evaluation without a bandwidth search needs fixed bandwidths")
        tcp_model(self.kappa)
        ProjectionParams(**self.projection)
        for spec in (self.ise_grid, self.h_grid, self.hs_grid, self.ht_grid, self.sigma_grid):
            grid_from_spec(spec)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ParameterOutOfRange(f"unknown config keys: {sorted(unknown)}")
        tuples = {k: tuple(tuple(x) if isinstance(x, list) else x for x in v) if isinstance(v, list) else v
                  for k, v in data.items()}
        return cls(**tuples)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


def _plain(obj):
    """JSON-ready copy: numpy scalars to Python, non-finite floats to ``None``."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


@dataclass
class ExperimentReport:
    config: dict
    records: dict
    aggregates: dict
    metadata: dict

    def to_json(self) -> str:
        body = {"config": self.config, "records": self.records,
                "aggregates": self.aggregates, "metadata": self.metadata}
        return json.dumps(_plain(body), sort_keys=True, indent=1, allow_nan=False) + "\n"


# ---------------------------------------------------------------- ISE

def ise_from_values(values, truth, step: float, max_failure_fraction: float = 0.2):
    """Rectangle-rule ISE along the last axis of ``values`` (NaN = failed point).

    Returns ``(ise, failed_count)``; entries with too many failures get ``inf``.
    """
    values = np.asarray(values, dtype=float)
    truth = np.asarray(truth, dtype=float)
    failed = np.isnan(values)
    sq = np.where(failed, 0.0, (values - truth) ** 2)
    out = step * sq.sum(axis=-1)
    nfail = failed.sum(axis=-1)
    out = np.where(nfail > max_failure_fraction * values.shape[-1], np.inf, out)
    return out, nfail


def ise(curve: EstimateCurve, truth, lo: float = 0.5, hi: float = 2.5, step: float = 0.05,
        max_failure_fraction: float = 0.2, return_failures: bool = False):
    """Integrated square error of ``curve`` against the function ``truth`` on
    ``{lo, lo + step, ..., hi}``; failed points are excluded."""
    grid = grid_from_spec((lo, hi, step))
    idx = np.searchsorted(curve.grid, grid)
    idx = np.clip(idx, 0, len(curve.grid) - 1)
    near = np.abs(curve.grid[idx] - grid) <= 1e-9
    if not near.all():
        left = np.clip(idx - 1, 0, len(curve.grid) - 1)
        near_left = np.abs(curve.grid[left] - grid) <= 1e-9
        idx = np.where(near, idx, left)
        if not (near | near_left).all():
            raise CoverageGap("curve grid does not cover the integration grid")
    values = curve.values[idx].astype(float)
    failed = np.zeros(curve.grid.shape[0], dtype=bool)
    failed[list(curve.failures)] = True
    values[failed[idx]] = np.nan
    truth_values = np.array([float(truth(x)) for x in grid])
    val, nfail = ise_from_values(values, truth_values, step, max_failure_fraction)
    if not math.isfinite(float(val)):
        raise CoverageGap(f"{int(nfail)} of {grid.size} grid points failed")
    return (float(val), int(nfail)) if return_failures else float(val)


# ---------------------------------------------------------------- parallel map

def _map(fn, args, jobs: int):
    if jobs <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map keeps submission order, so results never depend on scheduling
        return list(pool.map(fn, args, chunksize=1))


# ---------------------------------------------------------------- bandwidth search

def _search_unit(args):
    cfg_dict, n, r = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    model = tcp_model(cfg.kappa)
    traj = simulate_chain(model, cfg.z0, n, cfg.seed, replicate=(SEARCH_STAGE, r))
    grid = grid_from_spec(cfg.ise_grid)
    truth = model.rate.eval(grid)
    step = float(cfg.ise_grid[2])
    hg, hsg, htg = grid_from_spec(cfg.h_grid), grid_from_spec(cfg.hs_grid), grid_from_spec(cfg.ht_grid)
    rec = {"n": n, "replicate": r, "bandwidth": {}, "ise": {}, "failed_points": {}, "dropped": []}
    for kind in cfg.estimators:
        if kind == "k":
            vals = lambda_k_batch(traj, grid, hg, model)
        elif kind == "ks":
            vals = lambda_ks_batch(traj, grid, hg, model)
        elif kind == "amgo":
            vals = lambda_amgo_batch(traj, grid, hsg, htg, model)
        else:
            vals = lambda_amg_batch(traj, grid, hsg, htg)
        err, nfail = ise_from_values(vals, truth, step, cfg.max_failure_fraction)
        if not np.isfinite(err).any():
            rec["dropped"].append(kind)
            continue
        flat = int(np.argmin(err))  # first minimiser on ties
        pos = np.unravel_index(flat, err.shape)
        if kind in PAIR_KINDS:
            rec["bandwidth"][kind] = [float(hsg[pos[0]]), float(htg[pos[1]])]
        else:
            rec["bandwidth"][kind] = float(hg[pos[0]])
        rec["ise"][kind] = float(err[pos])
        rec["failed_points"][kind] = int(nfail[pos])
    return rec


def median_bandwidths(records, kinds) -> dict:
    """Median of the per-replicate optima (componentwise for pairs)."""
    out = {}
    for kind in kinds:
        chosen = [rec["bandwidth"][kind] for rec in records if kind in rec["bandwidth"]]
        if not chosen:
            continue
        arr = np.asarray(chosen, dtype=float)
        med = np.median(arr, axis=0)
        out[kind] = [float(v) for v in med] if arr.ndim == 2 else float(med)
    return out


def bandwidth_search(config: ExperimentConfig, jobs: int = 1) -> dict:
    """``{"records": {n: [...]}, "medians": {n: {kind: ...}}, "dropped": {n: {kind: count}}}``."""
    cfg_dict = config.to_dict()
    units = [(cfg_dict, int(n), r) for n in config.n_values for r in range(config.replicates)]
    results = _map(_search_unit, units, jobs)
    out = {"records": {}, "medians": {}, "dropped": {}}
    for n in config.n_values:
        recs = [rec for rec in results if rec["n"] == int(n)]
        key = str(int(n))
        out["records"][key] = recs
        out["medians"][key] = median_bandwidths(recs, config.estimators)
        out["dropped"][key] = {k: sum(k in rec["dropped"] for rec in recs) for k in config.estimators}
    return out


# ---------------------------------------------------------------- evaluation

def _point_estimate(traj, x, kind, bw, model):
    try:
        if kind == "k":
            return lambda_k(traj, x, bw, model)
        if kind == "ks":
            return lambda_ks(traj, x, bw, model)
        if kind == "amgo":
            return lambda_amgo(traj, x, bw[0], bw[1], model)
        return lambda_amg(traj, x, bw[0], bw[1])
    except (DenominatorZero, DegenerateCriterion):
        return None


def _evaluate_unit(args):
    cfg_dict, n, r, bandwidths = args
    cfg = ExperimentConfig.from_dict(cfg_dict)
    model = tcp_model(cfg.kappa)
    traj = simulate_chain(model, cfg.z0, n, cfg.seed, replicate=(EVAL_STAGE, r))
    truth = model.rate.eval
    rec = {"n": n, "replicate": r, "clt": {}, "errors": {}, "adaptive_errors": {}, "M_star": {}}
    grid = grid_from_spec(cfg.error_grid) if cfg.error_grid else np.empty(0)
    for kind in cfg.estimators:
        if kind not in bandwidths:
            continue
        bw = bandwidths[kind]
        rec["clt"][kind] = _point_estimate(traj, cfg.clt_x, kind, bw, model)
        if grid.size:
            curve = estimate_curve(traj, grid, kind, bw, model)
            rec["errors"][kind] = _abs_errors(curve, truth)
    if cfg.adaptive and cfg.adaptive_grid:
        agrid = grid_from_spec(cfg.adaptive_grid)
        for kind in ADAPTIVE_KINDS:
            curve, fit = adaptive_curve(traj, agrid, kind, model, cfg.projection)
            rec["adaptive_errors"][kind] = _abs_errors(curve, truth)
            rec["M_star"][kind] = fit.M_star
    return rec


def _abs_errors(curve, truth):
    err = np.abs(curve.values - truth(curve.grid))
    err[list(curve.failures)] = np.nan
    return [None if math.isnan(e) else float(e) for e in err]


def _evaluation_records(config: ExperimentConfig, medians: dict, jobs: int) -> dict:
    cfg_dict = config.to_dict()
    units = [(cfg_dict, int(n), r, medians[str(int(n))])
             for n in config.n_values for r in range(config.replicates)]
    results = _map(_evaluate_unit, units, jobs)
    return {str(int(n)): [rec for rec in results if rec["n"] == int(n)] for n in config.n_values}


def _quartiles(values):
    vals = np.array([v for v in values if v is not None], dtype=float)
    if vals.size == 0:
        return {"q1": None, "median": None, "q3": None, "count": 0, "failed": len(values)}
    q1, med, q3 = np.quantile(vals, [0.25, 0.5, 0.75])
    return {"q1": float(q1), "median": float(med), "q3": float(q3),
            "count": int(vals.size), "failed": len(values) - int(vals.size)}


def theoretical_sd(kind: str, x: float, n: int, bandwidth, kappa: float) -> float:
    if kind == "k":
        return math.sqrt(sigma_k2(x, kappa) / (n * bandwidth))
    if kind == "ks":
        return math.sqrt(sigma_ks2(x, kappa) / (n * bandwidth))
    hs, ht = bandwidth
    return math.sqrt(sigma_amg2(x, kappa) / (n * hs * ht))


@dataclass
class CLTSummary:
    x: float
    n: int
    kind: str
    estimates: np.ndarray
    mean: float
    sd: float
    theory_mean: float
    theory_sd: float
    failed: int

    def to_dict(self):
        return {"x": self.x, "n": self.n, "kind": self.kind, "mean": self.mean, "sd": self.sd,
                "theory_mean": self.theory_mean, "theory_sd": self.theory_sd,
                "sd_ratio": self.sd / self.theory_sd, "failed": self.failed}


def summarize_clt(records, kind, x, n, bandwidth, kappa) -> CLTSummary:
    est = np.array([np.nan if rec["clt"].get(kind) is None else rec["clt"][kind] for rec in records])
    ok = est[~np.isnan(est)]
    return CLTSummary(
        x=x, n=n, kind=kind, estimates=est,
        mean=float(ok.mean()) if ok.size else math.nan,
        sd=float(ok.std(ddof=1)) if ok.size > 1 else math.nan,
        theory_mean=float(x), theory_sd=theoretical_sd(kind, x, n, bandwidth, kappa),
        failed=int(np.isnan(est).sum()),
    )


def clt_experiment(x: float, n: int, replicates: int, bandwidths: dict, seed: int,
                   kappa: float = 0.4, z0: float = 1.0, jobs: int = 1) -> dict:
    """Replicated estimates at ``x`` for every estimator in ``bandwidths``.

    Returns ``{kind: CLTSummary}``; the theoretical mean is the true rate ``x``.
    """
    kinds = tuple(k for k in KERNEL_KINDS if k in bandwidths)
    cfg = ExperimentConfig(kappa=kappa, z0=z0, seed=seed, replicates=replicates, n_values=(n,),
                           estimators=kinds, adaptive=False, stages=("evaluation",), error_grid=(),
                           clt_x=x, bandwidths={str(n): bandwidths})
    recs = _evaluation_records(cfg, {str(n): bandwidths}, jobs)[str(n)]
    return {kind: summarize_clt(recs, kind, x, n, bandwidths[kind], kappa) for kind in kinds}


def summarize_errors(records, grid, kinds, key="errors") -> dict:
    """``{kind: {x: quartile summary}}`` over replicates."""
    out = {}
    for kind in kinds:
        rows = [rec[key][kind] for rec in records if kind in rec[key]]
        if not rows:
            continue
        out[kind] = {f"{x:.10g}": _quartiles([row[i] for row in rows]) for i, x in enumerate(grid)}
    return out


def pointwise_error_experiment(config: ExperimentConfig, bandwidths: dict, jobs: int = 1) -> dict:
    """Absolute errors on ``config.error_grid`` (and the adaptive grid).

    ``bandwidths`` maps ``str(n)`` to per-estimator bandwidths.  Returns
    ``{n: {"errors": ..., "adaptive": ..., "M_star": ...}}`` summaries.
    """
    records = _evaluation_records(config, bandwidths, jobs)
    return {n: _error_summary(config, recs) for n, recs in records.items()}


def _error_summary(config, recs):
    out = {"errors": summarize_errors(recs, grid_from_spec(config.error_grid), config.estimators)}
    if config.adaptive:
        out["adaptive"] = summarize_errors(recs, grid_from_spec(config.adaptive_grid),
                                           ADAPTIVE_KINDS, key="adaptive_errors")
        out["M_star"] = {k: [rec["M_star"][k] for rec in recs] for k in ADAPTIVE_KINDS}
    return out


# ---------------------------------------------------------------- theory curves

def variance_crossing_report(kappas, grid=None) -> dict:
    """Sign changes of the asymptotic standard deviation differences for each ``kappa``."""
    grid = grid_from_spec((0.1, 4.0, 0.01)) if grid is None else np.asarray(grid, dtype=float)
    out = {}
    for kappa in kappas:
        tab = theory_table(grid, kappa)
        out[f"{kappa:g}"] = {
            "amg_vs_k": sign_changes(grid, tab["sigma_amg"] - tab["sigma_k"]),
            "amg_vs_ks": sign_changes(grid, tab["sigma_amg"] - tab["sigma_ks"]),
            "k_vs_ks": sign_changes(grid, tab["sigma_k"] - tab["sigma_ks"]),
        }
    return out


# ---------------------------------------------------------------- bench

def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(["" if v is None else (format(v, ".17g") if isinstance(v, float) else v) for v in row])


def run_bench(config: ExperimentConfig, out_dir, jobs: int = 1):
    """Run the configured stages, write ``report.json`` and figure CSVs.

    Returns ``(report, written_paths)``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    records, aggregates = {}, {}
    kappa = config.kappa

    if "bandwidth" in config.stages:
        search = bandwidth_search(config, jobs)
        medians = search["medians"]
        records["bandwidth"] = search["records"]
        aggregates["bandwidths"] = {"medians": medians, "dropped": search["dropped"],
                                    "grid_bounds": _grid_bounds(config)}
        rows = []
        for n, recs in search["records"].items():
            for rec in recs:
                for kind, bw in rec["bandwidth"].items():
                    hs, ht = (bw if isinstance(bw, list) else (None, None))
                    rows.append([int(n), rec["replicate"], kind, None if hs is not None else bw,
                                 hs, ht, rec["ise"][kind]])
        path = out / "fig3_bandwidths.csv"
        _write_csv(path, ["n", "replicate", "estimator", "h", "h_s", "h_t", "ise"], rows)
        written.append(path)
    else:
        medians = {str(k): v for k, v in (config.bandwidths or {}).items()}

    if "evaluation" in config.stages:
        ev = _evaluation_records(config, medians, jobs)
        records["evaluation"] = ev
        clt, errs = {}, {}
        clt_rows, err_rows = [], []
        egrid = grid_from_spec(config.error_grid)
        agrid = grid_from_spec(config.adaptive_grid) if config.adaptive else np.empty(0)
        for n, recs in ev.items():
            clt[n] = {kind: summarize_clt(recs, kind, config.clt_x, int(n), medians[n][kind], kappa).to_dict()
                      for kind in config.estimators if kind in medians[n]}
            errs[n] = _error_summary(config, recs)
            for rec in recs:
                for kind, v in rec["clt"].items():
                    clt_rows.append([int(n), rec["replicate"], kind, v, int(v is None)])
                for key, grid in (("errors", egrid), ("adaptive_errors", agrid)):
                    for kind, row in rec[key].items():
                        for x, e in zip(grid, row):
                            err_rows.append([int(n), rec["replicate"], kind, float(x), e, int(e is None)])
        aggregates["clt"] = clt
        aggregates["pointwise"] = errs
        for name, header, rows in (
            ("fig5_clt.csv", ["n", "replicate", "estimator", "estimate", "failed"], clt_rows),
            ("fig7_errors.csv", ["n", "replicate", "estimator", "x", "error", "failed"], err_rows),
        ):
            _write_csv(out / name, header, rows)
            written.append(out / name)

    if "variance" in config.stages:
        sgrid = grid_from_spec(config.sigma_grid)
        aggregates["crossings"] = variance_crossing_report(config.kappa_grid, sgrid)
        rows = []
        for kp in config.kappa_grid:
            tab = theory_table(sgrid, kp)
            for i, x in enumerate(sgrid):
                rows.append([float(kp), float(x), float(tab["sigma_k"][i]),
                             float(tab["sigma_ks"][i]), float(tab["sigma_amg"][i])])
        _write_csv(out / "fig2_sigmas.csv", ["kappa", "x", "sigma_k", "sigma_ks", "sigma_amg"], rows)
        written.append(out / "fig2_sigmas.csv")
        rows = []
        normalized = {}
        for n, bws in medians.items():
            spatial = bws.get("amg", bws.get("amgo"))
            if not all(k in bws for k in ("k", "ks")) or spatial is None:
                continue
            curves = normalized_sd_curves(int(n), {"k": bws["k"], "ks": bws["ks"], "amg": spatial},
                                          sgrid, kappa)
            normalized[n] = {"amg_vs_k": sign_changes(sgrid, curves.sd_amg - curves.sd_k),
                             "amg_vs_ks": sign_changes(sgrid, curves.sd_amg - curves.sd_ks)}
            for i, x in enumerate(sgrid):
                rows.append([int(n), float(x), float(curves.sd_k[i]), float(curves.sd_ks[i]),
                             float(curves.sd_amg[i])])
        aggregates["normalized_crossings"] = normalized
        _write_csv(out / "fig6_normalized.csv", ["n", "x", "sd_k", "sd_ks", "sd_amg"], rows)
        written.append(out / "fig6_normalized.csv")

    report = ExperimentReport(
        config=config.to_dict(), records=records, aggregates=aggregates,
        metadata={"config_hash": config.digest(), "seed": config.seed, "version": __version__},
    )
    path = out / "report.json"
    path.write_text(report.to_json(), encoding="utf-8")
    written.insert(0, path)
    return report, written


def _grid_bounds(config):
    hg, hsg, htg = (grid_from_spec(g) for g in (config.h_grid, config.hs_grid, config.ht_grid))
    return {"h": [float(hg[0]), float(hg[-1])], "h_s": [float(hsg[0]), float(hsg[-1])],
            "h_t": [float(htg[0]), float(htg[-1])]}
