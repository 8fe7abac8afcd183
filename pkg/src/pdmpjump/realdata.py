"""Division-rate estimation from per-minute cell-size lineages.

Data contract: one CSV per lineage with header ``time,size,division``.  A
row with ``division = 1`` is the last measurement before a division; the next
row is the first measurement of a daughter cell.  A cell therefore spans from
the row after one flag to the next flag, inclusive.  Work happens on the
log-size scale, where growth is linear with slope ``theta``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .adaptive import ProjectionParams, adaptive_curve
from .errors import (
    DenominatorZero,
    NoDivisions,
    NonMonotoneTime,
    NonPositiveSize,
    ParameterOutOfRange,
    ParseError,
    SegmentTooShort,
)
from .estimators import EstimateCurve, estimate_curve, lambda_circ_phi
from .model import JumpRateSpec, attach_rate, growth_model, rate_from_curve
from .simulate import sample_grid, simulate_chain, trajectory_from_arrays

HEADER = ("time", "size", "division")

# smoothing parameters per growth temperature: (ks bandwidth, (space, time) bandwidths)
TABLE_BANDWIDTHS = {
    37: {"ks": 0.02, "amg": (0.03, 3.0)},
    25: {"ks": 0.05, "amg": (0.06, 4.0)},
    27: {"ks": 0.07, "amg": (0.08, 8.0)},
}
# reference summaries of the E. coli growth data, kept for comparison only
REFERENCE = {
    37: {"theta": 0.025, "tau": 31.6, "divisions": 11040},
    25: {"theta": 0.012, "tau": 66.6, "divisions": 4485},
    27: {"theta": 0.014, "tau": 52.4, "divisions": 3726},
}
METHODS = ("ks", "adaptive_ks", "amg")


@dataclass(frozen=True, eq=False)
class LineageRecord:
    lineage_id: str
    time: np.ndarray
    size: np.ndarray
    division: np.ndarray

    @property
    def rows(self) -> int:
        return int(self.time.shape[0])

    @property
    def n_divisions(self) -> int:
        return int(self.division.sum())


def parse_lineage(path, lineage_id: str | None = None) -> LineageRecord:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(h.strip() for h in header) != HEADER:
                raise ParseError(f"{path}: expected header {','.join(HEADER)}, got {header}")
            rows = [r for r in reader if r and any(c.strip() for c in r)]
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not a text file") from exc
    time = np.empty(len(rows))
    size = np.empty(len(rows))
    div = np.empty(len(rows), dtype=bool)
    for i, row in enumerate(rows):
        if len(row) != 3:
            raise ParseError(f"{path}:{i + 2}: expected 3 fields, got {len(row)}")
        try:
            time[i], size[i] = float(row[0]), float(row[1])
            flag = int(float(row[2]))
        except ValueError as exc:
            raise ParseError(f"{path}:{i + 2}: {exc}") from exc
        if flag not in (0, 1) or not (math.isfinite(time[i]) and math.isfinite(size[i])):
            raise ParseError(f"{path}:{i + 2}: malformed row {row}")
        if not size[i] > 0:
            raise NonPositiveSize(f"{path}:{i + 2}: size {size[i]} is not positive")
        div[i] = bool(flag)
    if len(rows) > 1 and np.any(np.diff(time) <= 0):
        bad = int(np.argmax(np.diff(time) <= 0)) + 3
        raise NonMonotoneTime(f"{path}:{bad}: time does not increase")
    return LineageRecord(lineage_id=lineage_id or path.stem, time=time, size=size, division=div)


def load_lineages(directory) -> list:
    paths = sorted(Path(directory).glob("*.csv"))
    if not paths:
        raise ParseError(f"no CSV files in {directory}")
    return [parse_lineage(p) for p in paths]


def _cells(rec: LineageRecord):
    """``(start_row, end_row)`` of every complete cell, plus the number of
    flags lacking a following row."""
    flags = np.flatnonzero(rec.division)
    cells = [(int(a) + 1, int(b)) for a, b in zip(flags[:-1], flags[1:])]
    dangling = int(flags.size > 0 and flags[-1] + 1 >= rec.rows)
    return cells, dangling


@dataclass(frozen=True)
class SlopeFit:
    slopes: np.ndarray
    theta: float
    skipped: int
    messages: tuple = ()


def _ols_slope(t, y):
    tc = t - t.mean()
    return float(np.dot(tc, y - y.mean()) / np.dot(tc, tc))


def fit_slopes(records) -> SlopeFit:
    """Least-squares slope of log-size against time for every complete cell."""
    slopes, messages = [], []
    for rec in records:
        for a, b in _cells(rec)[0]:
            if b - a + 1 < 2:
                messages.append(str(SegmentTooShort(f"{rec.lineage_id}: cell rows {a}..{b} has < 2 points")))
                continue
            slopes.append(_ols_slope(rec.time[a:b + 1], np.log(rec.size[a:b + 1])))
    if not slopes:
        raise NoDivisions("no complete cell to fit")
    arr = np.array(slopes)
    return SlopeFit(slopes=arr, theta=float(arr.mean()), skipped=len(messages), messages=tuple(messages))


@dataclass(frozen=True, eq=False)
class EmbeddedData:
    """Per complete cell: birth log-size ``z``, log-size at division ``z_minus``
    and lifetime ``s``; per division event: the size ratio.

    ``lineage_index`` tells which lineage each cell came from, so the chains
    can be kept apart when pooled.
    """

    z: np.ndarray
    z_minus: np.ndarray
    s: np.ndarray
    slopes: np.ndarray
    division_ratios: np.ndarray
    lineage_index: np.ndarray
    n_divisions: int
    dropped: tuple = field(default=())

    @property
    def tau(self) -> float:
        return float(self.s.mean())

    def to_trajectory(self):
        """Pooled embedded chain.

        Pairs ``(Z_i, Z_{i+1}^-, S_{i+1})`` are exact; the successor of the last
        cell of a lineage is not observed, so ``z[1:]`` is only meaningful
        within a lineage and its final entry is NaN.
        """
        z = np.concatenate([self.z, [np.nan]])
        return trajectory_from_arrays(z, self.z_minus, self.s, label="embedded")

    def to_csv(self, path) -> None:
        rows = np.column_stack([np.arange(1, self.z.size + 1), self.lineage_index, self.z, self.z_minus, self.s])
        np.savetxt(path, rows, delimiter=",", header="k,lineage,z,z_minus,s", comments="",
                   fmt=["%d", "%d", "%.17g", "%.17g", "%.17g"])


def extract_embedded(records) -> EmbeddedData:
    z, zm, s, lin, ratios, dropped = [], [], [], [], [], []
    n_div = 0
    for li, rec in enumerate(records):
        flags = np.flatnonzero(rec.division)
        n_div += flags.size
        cells, dangling = _cells(rec)
        if flags.size:
            dropped.append(f"{rec.lineage_id}: rows before the first division dropped (cell spans the file start)")
        if dangling:
            dropped.append(f"{rec.lineage_id}: last division has no following row")
        logs = np.log(rec.size)
        for f in flags:
            if f + 1 < rec.rows:
                r = rec.size[f + 1] / rec.size[f]
                if not 0.0 < r < 1.0:
                    raise ParseError(f"{rec.lineage_id}: division at t={rec.time[f]} has size ratio {r:.4g} outside (0, 1)")
                ratios.append(r)
        for a, b in cells:
            z.append(logs[a])
            zm.append(logs[b])
            s.append(rec.time[b] - rec.time[a - 1])
            lin.append(li)
    if n_div == 0:
        raise NoDivisions("no division flag in the records")
    if not z:
        raise NoDivisions("no complete cell between two divisions")
    slopes = fit_slopes(records).slopes
    return EmbeddedData(z=np.array(z), z_minus=np.array(zm), s=np.array(s), slopes=slopes,
                        division_ratios=np.array(ratios), lineage_index=np.array(lin, dtype=int),
                        n_divisions=int(n_div), dropped=tuple(dropped))


def default_grid(data: EmbeddedData, step: float = 0.01) -> np.ndarray:
    """From small birth sizes to large division sizes; the lower end matters
    because the fitted rate is continued as a constant outside the grid."""
    lo = float(np.quantile(data.z, 0.025))
    hi = float(np.quantile(data.z_minus, 0.975))
    start = math.ceil(lo / step) * step
    return np.round(np.arange(start, hi + 1e-12, step), 10)


def fitted_model(data: EmbeddedData, theta: float):
    ratios = data.division_ratios
    return growth_model(theta, float(ratios.mean()), float(ratios.std(ddof=1)) if ratios.size > 1 else 0.0)


def estimate_division_rate(data: EmbeddedData, theta: float, method: str = "ks",
                           bandwidths=None, grid=None, temp: int = 37, projection=None) -> EstimateCurve:
    """Division rate on a log-size grid.

    ``amg`` skips the argmax search: it starts the flow at ``x - theta * tau``
    with ``tau`` the mean lifetime and reads the conditional rate after ``tau``.
    """
    if method not in METHODS:
        raise ParameterOutOfRange(f"unknown method {method!r}")
    if not theta > 0:
        raise ParameterOutOfRange("theta must be positive")
    grid = default_grid(data) if grid is None else np.asarray(grid, dtype=float)
    defaults = TABLE_BANDWIDTHS.get(int(temp), TABLE_BANDWIDTHS[37])
    model = fitted_model(data, theta)
    traj = data.to_trajectory()
    if method == "ks":
        h = float(bandwidths if bandwidths is not None else defaults["ks"])
        return estimate_curve(traj, grid, "ks", h, model)
    if method == "adaptive_ks":
        params = projection or ProjectionParams(a=float(min(data.z.min(), data.z_minus.min())),
                                                b=float(data.z_minus.max()))
        curve, _ = adaptive_curve(traj, grid, "adaptive_ks", model, params)
        return curve
    hs, ht = (float(b) for b in (bandwidths if bandwidths is not None else defaults["amg"]))
    tau = data.tau
    values = np.full(grid.size, np.nan)
    failures = []
    for i, x in enumerate(grid):
        try:
            values[i] = lambda_circ_phi(traj, x - theta * tau, tau, hs, ht)
        except DenominatorZero:
            failures.append(i)
    return EstimateCurve(grid=grid, values=values, estimator_kind="amg", bandwidths=(hs, ht),
                         n=traj.n, failures=tuple(failures))


@dataclass(frozen=True, eq=False)
class ValidationReport:
    ks_distance: float
    simulated_sizes: np.ndarray
    observed_sizes: np.ndarray
    size_grid: np.ndarray
    simulated_density: np.ndarray
    observed_density: np.ndarray
    seed: int

    def to_csv(self, path) -> None:
        rows = np.column_stack([self.size_grid, self.simulated_density, self.observed_density])
        np.savetxt(path, rows, delimiter=",", header="size,simulated_density,observed_density",
                   comments="", fmt="%.17g")


def validate_posterior(model, rate_curve: EstimateCurve, observed_sizes, seed: int,
                       x0: float = 1.5, n_jumps: int = 1000, last: int = 10000) -> ValidationReport:
    """Simulate with the estimated rate on a minute grid and compare size laws.

    ``x0`` is a log-size.  The statistic is the two-sample Kolmogorov-Smirnov
    distance between the last ``last`` simulated sizes and ``observed_sizes``;
    Gaussian kernel densities of both are reported on a common grid.
    """
    values = np.where(np.isin(np.arange(rate_curve.grid.size), rate_curve.failures), np.nan, rate_curve.values)
    rate = rate_from_curve(rate_curve.grid, np.clip(values, 0.0, None), label="estimated")
    fitted = attach_rate(model, rate)
    traj = simulate_chain(fitted, x0, n_jumps, seed)
    samples = sample_grid(fitted, traj, 1.0)
    sim = np.exp(samples.values[-last:])
    obs = np.asarray(observed_sizes, dtype=float)
    ks = float(stats.ks_2samp(sim, obs).statistic)
    lo, hi = min(sim.min(), obs.min()), max(sim.max(), obs.max())
    grid = np.linspace(lo, hi, 200)
    return ValidationReport(ks_distance=ks, simulated_sizes=sim, observed_sizes=obs, size_grid=grid,
                            simulated_density=stats.gaussian_kde(sim)(grid),
                            observed_density=stats.gaussian_kde(obs)(grid), seed=int(seed))


# ---------------------------------------------------------------- synthetic data

def synthetic_growth_rate(theta: float, steepness: float = 8.0, center: float = 1.5,
                          onset: float = 1.3) -> JumpRateSpec:
    """``theta * steepness * exp(steepness * (x - center))`` on log-size above
    ``onset`` and zero below it, so a newborn cell cannot divide at once."""
    a = theta * steepness

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        out = np.where(x >= onset, a * np.exp(steepness * (x - center)), 0.0)
        return float(out) if out.ndim == 0 else out

    def antiderivative(x):
        x = np.maximum(np.asarray(x, dtype=float), onset)
        out = theta * np.exp(steepness * (x - center))
        return float(out) if out.ndim == 0 else out

    return JumpRateSpec(eval=evaluate, antiderivative=antiderivative, label="synthetic-exponential")


def write_synthetic_lineages(out_dir, theta: float = 0.025, ratio_mean: float = 0.5,
                             ratio_sd: float = 0.04, n_lineages: int = 4, jumps: int = 1250,
                             seed: int = 0, x0: float = 1.0) -> dict:
    """Simulate lineages of the growth model and write minute-grid CSVs.

    Each file runs one minute past its last division so every division has a
    post-division row.  Returns the ground truth used.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = attach_rate(growth_model(theta, ratio_mean, ratio_sd), synthetic_growth_rate(theta))
    paths, divisions = [], 0
    for i in range(n_lineages):
        traj = simulate_chain(model, x0, jumps, seed, replicate=i)
        grid = sample_grid(model, traj, 1.0, t_end=math.floor(traj.t[-1]) + 1.0)
        path = out / f"lineage_{i:03d}.csv"
        grid.to_csv(path, exponentiate=True)
        paths.append(str(path))
        divisions += int(grid.division_flags.sum())
    return {"theta": theta, "ratio_mean": ratio_mean, "ratio_sd": ratio_sd, "paths": paths,
            "divisions": divisions, "jumps": n_lineages * jumps, "model": model}
