"""Kernel estimators of the jump rate from the first ``n`` jumps of one trajectory.

Four families are provided:

* ``k``: ratio of the post-jump density at ``h(x)`` to an empirical
  survival count (deterministic fragmentation only);
* ``ks``: the same ratio built on the pre-jump locations, valid for any
  transition kernel;
* ``amgo`` / ``amg``: the conditional estimator of ``lambda(Phi(t | xi))``
  evaluated at the starting point ``xi`` that maximises the amount of
  information about ``x``.  ``amgo`` knows that maximiser from theory,
  ``amg`` estimates it from the sample.

Scalar functions raise on undefined estimates; the ``*_batch`` functions
evaluate whole grids for many bandwidths at once and mark failures with NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ._backend import core
from .errors import (
    DegenerateCriterion,
    DegenerateDenominator,
    DenominatorZero,
    ParameterOutOfRange,
)
from .model import Deterministic, ModelSpec
from .simulate import Trajectory
from .theory import CX_EPS, CX_STEP, cx_grid, tcp_oracle_argmax

DENOMINATOR_FLOOR = 1e-12
KINDS = ("k", "ks", "amgo", "amg", "adaptive_k", "adaptive_ks")


@dataclass(frozen=True)
class Kernel:
    eval: Callable
    support_radius: float
    tau2: float
    name: str = ""

    def __call__(self, u):
        return self.eval(u)


def _epan_eval(u):
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return float(out) if out.ndim == 0 else out


def epanechnikov() -> Kernel:
    return Kernel(eval=_epan_eval, support_radius=1.0, tau2=0.6, name="epanechnikov")


@dataclass(frozen=True, eq=False)
class EstimateCurve:
    grid: np.ndarray
    values: np.ndarray
    estimator_kind: str
    bandwidths: tuple
    n: int
    failures: tuple = field(default=())

    def to_csv(self, path) -> None:
        failed = np.zeros(self.grid.shape[0], dtype=int)
        failed[list(self.failures)] = 1
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("x,estimate,failed\n")
            for x, v, f in zip(self.grid, self.values, failed):
                fh.write(f"{x:.17g},{'' if f else format(v, '.17g')},{f}\n")


def _positive(**bandwidths):
    for name, value in bandwidths.items():
        if not value > 0:
            raise ParameterOutOfRange(f"{name} must be positive, got {value}")


def _ratio(num, den, what):
    if not den >= DENOMINATOR_FLOOR:
        raise DenominatorZero(f"{what}: denominator {den:.3g} below {DENOMINATOR_FLOOR:g}")
    return num / den


def _require_deterministic(model):
    if not isinstance(model.transition, Deterministic):
        raise ParameterOutOfRange("this estimator needs a deterministic fragmentation map")
    return model.transition


def k_denominator_counts(traj: Trajectory, xs, model: ModelSpec) -> np.ndarray:
    """``#{i < n : Z_i <= x, Z_{i+1} >= h(x)}`` for every ``x``."""
    tr = _require_deterministic(model)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    head, nxt = traj.z[:-1], traj.z[1:]
    hx = np.asarray(tr.h(xs), dtype=float)
    return np.array([np.count_nonzero((head <= x) & (nxt >= y)) for x, y in zip(xs, hx)])


def ks_denominator_counts(traj: Trajectory, xs) -> np.ndarray:
    """``#{i < n : Z_i <= x < Z_{i+1}^-}``.

    Since ``Z_i <= Z_{i+1}^-`` the count is ``#{Z_i <= x} - #{Z_{i+1}^- <= x}``.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    return (np.searchsorted(traj.head_sorted, xs, side="right")
            - np.searchsorted(traj.z_minus_sorted, xs, side="right"))


def lambda_k(traj: Trajectory, x: float, h_n: float, model: ModelSpec) -> float:
    _positive(h_n=h_n)
    tr = _require_deterministic(model)
    pref = float(tr.h_prime(x)) * float(model.flow.derivative_at_zero(x))
    num = core.epan_sums(traj.head_sorted, np.array([float(tr.h(x))]), h_n)[0]
    den = float(k_denominator_counts(traj, [x], model)[0])
    return pref * _ratio(num, den, f"k estimator at x={x}")


def lambda_ks(traj: Trajectory, x: float, h_n: float, model: ModelSpec) -> float:
    _positive(h_n=h_n)
    pref = float(model.flow.derivative_at_zero(x))
    num = core.epan_sums(traj.z_minus_sorted, np.array([float(x)]), h_n)[0]
    den = float(ks_denominator_counts(traj, [x])[0])
    return pref * _ratio(num, den, f"ks estimator at x={x}")


def lambda_circ_phi(traj: Trajectory, xi: float, t: float, h_s: float, h_t: float) -> float:
    """Estimate of ``lambda(Phi(t | xi))`` from the pairs ``(Z_i, S_{i+1})``."""
    _positive(h_s=h_s, h_t=h_t)
    zs, ss = traj.pairs_by_z
    num, den = core.lcp_sums(zs, ss, float(xi), float(t), float(h_s), np.array([float(h_t)]))
    return _ratio(float(num[0]), den, f"conditional estimator at (xi={xi}, t={t})")


def _tcp_kappa(model):
    if model is None or model.kind != "tcp":
        raise ParameterOutOfRange("the oracle argmax is only available for the TCP model")
    return model.params["kappa"]


def oracle_argmax(x: float, model: ModelSpec) -> float:
    try:
        return tcp_oracle_argmax(x, _tcp_kappa(model))
    except DegenerateDenominator as exc:
        raise DegenerateCriterion(str(exc)) from exc


def lambda_amgo(traj: Trajectory, x: float, h_s: float, h_t: float, model: ModelSpec,
                oracle: Callable[[float], float] | None = None) -> float:
    """``oracle`` maps ``x`` to the selected starting point; defaults to the TCP one."""
    if not x > 0:
        raise ParameterOutOfRange("x must be positive")
    xi = oracle(x) if oracle is not None else oracle_argmax(x, model)
    return lambda_circ_phi(traj, xi, x - xi, h_s, h_t)


def amg_argmax(traj: Trajectory, xs, h_s: float) -> np.ndarray:
    """Estimated maximiser for every ``x`` (NaN where the criterion vanishes)."""
    _positive(h_s=h_s)
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    order = np.argsort(xs, kind="stable")
    xs_sorted = xs[order]
    grid = cx_grid(float(xs_sorted[-1])) if xs.size else np.empty(0)
    out = np.full(xs.shape[0], np.nan)
    if grid.size == 0:
        return out
    zs, ss = traj.pairs_by_z
    crit = core.amg_criterion(zs, ss, xs_sorted, grid, float(h_s))
    counts = np.floor((xs_sorted - CX_EPS) / CX_STEP + 1e-9).astype(int) + 1
    for j, c in enumerate(counts):
        if c <= 0:
            continue
        row = crit[j, :c]
        m = int(np.argmax(row))
        if row[m] > 0:
            out[order[j]] = grid[m]
    return out


def lambda_amg(traj: Trajectory, x: float, h_s: float, h_t: float) -> float:
    if not x > 0:
        raise ParameterOutOfRange("x must be positive")
    xi = amg_argmax(traj, [x], h_s)[0]
    if math.isnan(xi):
        raise DegenerateCriterion(f"empirical criterion vanishes on the reachable grid at x={x}")
    return lambda_circ_phi(traj, xi, x - xi, h_s, h_t)


def estimate_curve(traj: Trajectory, grid, kind: str, bandwidths, model: ModelSpec | None = None) -> EstimateCurve:
    """Evaluate one estimator on ``grid``; undefined points are recorded as failures.

    ``bandwidths`` is ``h`` for ``k``/``ks`` and ``(h_s, h_t)`` otherwise.
    """
    grid = np.asarray(grid, dtype=float)
    if kind in ("k", "ks"):
        h = float(bandwidths[0] if np.ndim(bandwidths) else bandwidths)
        fn = lambda_k if kind == "k" else lambda_ks
        call = lambda x: fn(traj, x, h, model)  # noqa: E731
        bw = (h,)
    elif kind in ("amgo", "amg"):
        hs, ht = (float(b) for b in bandwidths)
        if kind == "amgo":
            call = lambda x: lambda_amgo(traj, x, hs, ht, model)  # noqa: E731
        else:
            call = lambda x: lambda_amg(traj, x, hs, ht)  # noqa: E731
        bw = (hs, ht)
    else:
        raise ParameterOutOfRange(f"unknown estimator {kind!r}")
    values = np.full(grid.shape[0], np.nan)
    failures = []
    for i, x in enumerate(grid):
        if kind in ("amgo", "amg") and not x > 0:
            failures.append(i)
            continue
        try:
            values[i] = call(float(x))
        except (DenominatorZero, DegenerateCriterion):
            failures.append(i)
    return EstimateCurve(grid=grid, values=values, estimator_kind=kind, bandwidths=bw,
                         n=traj.n, failures=tuple(failures))


# ---- batch evaluation over bandwidth grids (NaN marks undefined values) ----

def _safe_divide(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(den >= DENOMINATOR_FLOOR, num / np.where(den > 0, den, 1.0), np.nan)


def lambda_k_batch(traj: Trajectory, grid, bandwidths, model: ModelSpec) -> np.ndarray:
    """Array ``[len(bandwidths), len(grid)]``."""
    tr = _require_deterministic(model)
    grid = np.asarray(grid, dtype=float)
    pref = np.asarray(tr.h_prime(grid), dtype=float) * np.asarray(model.flow.derivative_at_zero(grid), dtype=float)
    den = k_denominator_counts(traj, grid, model).astype(float)
    centers = np.asarray(tr.h(grid), dtype=float)
    num = np.array([core.epan_sums(traj.head_sorted, centers, float(h)) for h in bandwidths])
    return pref * _safe_divide(num, den)


def lambda_ks_batch(traj: Trajectory, grid, bandwidths, model: ModelSpec) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    pref = np.asarray(model.flow.derivative_at_zero(grid), dtype=float)
    den = ks_denominator_counts(traj, grid).astype(float)
    num = np.array([core.epan_sums(traj.z_minus_sorted, grid, float(h)) for h in bandwidths])
    return pref * _safe_divide(num, den)


def _conditional_batch(traj, grid, xi_rows, hs_list, ht_list):
    zs, ss = traj.pairs_by_z
    hts = np.asarray(ht_list, dtype=float)
    out = np.full((len(hs_list), hts.size, len(grid)), np.nan)
    for a, hs in enumerate(hs_list):
        xis = xi_rows[a]
        for j, x in enumerate(grid):
            xi = xis[j]
            if math.isnan(xi):
                continue
            num, den = core.lcp_sums(zs, ss, float(xi), float(x - xi), float(hs), hts)
            if den >= DENOMINATOR_FLOOR:
                out[a, :, j] = num / den
    return out


def lambda_amgo_batch(traj: Trajectory, grid, hs_list, ht_list, model: ModelSpec) -> np.ndarray:
    """Array ``[len(hs_list), len(ht_list), len(grid)]``."""
    grid = np.asarray(grid, dtype=float)
    xis = np.array([oracle_argmax(float(x), model) for x in grid])
    return _conditional_batch(traj, grid, [xis] * len(hs_list), hs_list, ht_list)


def lambda_amg_batch(traj: Trajectory, grid, hs_list, ht_list) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    rows = [amg_argmax(traj, grid, float(hs)) for hs in hs_list]
    return _conditional_batch(traj, grid, rows, hs_list, ht_list)
