"""Trajectory generation by inversion of the cumulative hazard."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from ._backend import core
from .errors import HazardExhausted, ParameterOutOfRange
from .model import ModelSpec
from .theory import cumulative_hazard

# doubling search for the inter-jump time stops beyond this horizon
T_MAX_LIMIT = 1e6
INVERSION_XTOL = 1e-10


def replicate_rng(seed: int, replicate=None) -> np.random.Generator:
    """Generator for ``seed``; ``replicate`` (an int or a tuple of ints) selects
    an independent substream."""
    if replicate is None:
        key = ()
    elif isinstance(replicate, (tuple, list)):
        key = tuple(int(r) for r in replicate)
    else:
        key = (int(replicate),)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """First ``n`` jumps of a trajectory.

    ``z`` holds the post-jump locations ``Z_0, ..., Z_n`` (``Z_0`` is the
    starting point), while ``z_minus[k]``, ``s[k]`` and ``t[k]`` describe jump
    ``k + 1``: pre-jump location, time since the previous jump, jump time.
    """

    z: np.ndarray
    z_minus: np.ndarray
    s: np.ndarray
    t: np.ndarray
    model_label: str = ""
    seed: int | None = None
    replicate: int | tuple | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.s.shape[0])

    @property
    def z0(self) -> float:
        return float(self.z[0])

    @functools.cached_property
    def head_sorted(self) -> np.ndarray:
        """``Z_0, ..., Z_{n-1}`` sorted."""
        return np.sort(self.z[:-1])

    @functools.cached_property
    def tail_sorted(self) -> np.ndarray:
        """``Z_1, ..., Z_n`` sorted."""
        return np.sort(self.z[1:])

    @functools.cached_property
    def z_minus_sorted(self) -> np.ndarray:
        return np.sort(self.z_minus)

    @functools.cached_property
    def pairs_by_z(self) -> tuple:
        """``(Z_i, S_{i+1})`` for ``i < n``, ordered by ``Z_i``."""
        order = np.argsort(self.z[:-1], kind="stable")
        return self.z[:-1][order], self.s[order]

    def to_csv(self, path) -> None:
        rows = np.column_stack([np.arange(1, self.n + 1), self.z[1:], self.z_minus, self.s, self.t])
        np.savetxt(path, rows, delimiter=",", header="k,z,z_minus,s,t", comments="",
                   fmt=["%d", "%.17g", "%.17g", "%.17g", "%.17g"])


def trajectory_from_arrays(z, z_minus, s, label="", **meta) -> Trajectory:
    z = np.asarray(z, dtype=float)
    z_minus = np.asarray(z_minus, dtype=float)
    s = np.asarray(s, dtype=float)
    if not (z.shape[0] == s.shape[0] + 1 == z_minus.shape[0] + 1):
        raise ParameterOutOfRange("expected len(z) == len(s) + 1 == len(z_minus) + 1")
    return Trajectory(z=z, z_minus=z_minus, s=s, t=np.cumsum(s), model_label=label, meta=meta)


def sample_interjump(model: ModelSpec, z: float, u: float, method: str = "auto") -> float:
    """Time ``t`` with ``G(t | z) = u``.

    The TCP process is inverted in closed form unless ``method="generic"``,
    which brackets the root by doubling and refines it with Brent's method.
    """
    if not 0.0 < u < 1.0:
        raise ParameterOutOfRange(f"u must lie in (0, 1), got {u}")
    return _invert_hazard(model, z, -math.log(u), method)


def _invert_hazard(model, z, level, method="auto"):
    if model.kind == "tcp" and method == "auto":
        return 2.0 * level / (z + math.sqrt(z * z + 2.0 * level))
    hazard_method = "quad" if method == "quad" else "auto"

    def excess(t):
        return cumulative_hazard(model, z, t, method=hazard_method) - level

    t_max = 1.0
    while excess(t_max) < 0.0:
        t_max *= 2.0
        if t_max > T_MAX_LIMIT:
            raise HazardExhausted(
                f"cumulative hazard from z={z} stays below {level:.6g} up to t={T_MAX_LIMIT:g}")
    return optimize.brentq(excess, 0.0, t_max, xtol=INVERSION_XTOL, rtol=4 * np.finfo(float).eps)


def simulate_chain(model: ModelSpec, z0: float, n: int, seed: int,
                   replicate=None) -> Trajectory:
    """First ``n`` jumps started from ``z0``; a pure function of its arguments."""
    if n < 1:
        raise ParameterOutOfRange("n must be >= 1")
    lo, hi = model.support
    if not lo <= z0 <= hi:
        raise ParameterOutOfRange(f"z0={z0} outside the support {model.support}")
    if model.rate is None:
        raise ParameterOutOfRange("model has no jump rate attached")
    rng = replicate_rng(seed, replicate)
    if model.kind == "tcp":
        e = rng.standard_exponential(n)
        z, zm, s = core.tcp_chain(float(z0), model.params["kappa"], e)
    else:
        z = np.empty(n + 1)
        zm = np.empty(n)
        s = np.empty(n)
        z[0] = cur = float(z0)
        for k in range(n):
            try:
                dt = _invert_hazard(model, cur, rng.standard_exponential())
            except HazardExhausted as exc:
                raise HazardExhausted(str(exc), index=k) from exc
            s[k] = dt
            zm[k] = model.flow.eval(dt, cur)
            cur = float(model.transition.apply(zm[k], rng))
            z[k + 1] = cur
    return Trajectory(z=z, z_minus=zm, s=s, t=np.cumsum(s), model_label=model.label,
                      seed=int(seed), replicate=replicate, meta={"z0": float(z0)})


@dataclass(frozen=True, eq=False)
class GridSamples:
    dt: float
    times: np.ndarray
    values: np.ndarray
    division_flags: np.ndarray

    def to_csv(self, path, exponentiate: bool = False) -> None:
        """Write ``time,size,division``; ``exponentiate`` turns log-sizes into sizes."""
        size = np.exp(self.values) if exponentiate else self.values
        rows = np.column_stack([self.times, size, self.division_flags.astype(int)])
        np.savetxt(path, rows, delimiter=",", header="time,size,division", comments="",
                   fmt=["%.17g", "%.17g", "%d"])


def sample_grid(model: ModelSpec, traj: Trajectory, dt: float, t_end: float | None = None) -> GridSamples:
    """Values of ``X`` at multiples of ``dt`` up to ``t_end`` (default: last jump time).

    A jump at time ``T`` in ``(i dt, (i + 1) dt]`` is flagged on row ``i``,
    the last sample taken strictly before the jump.
    """
    if not dt > 0:
        raise ParameterOutOfRange("dt must be positive")
    t_end = float(traj.t[-1]) if t_end is None else float(t_end)
    m = int(math.floor(t_end / dt + 1e-12))
    times = dt * np.arange(m + 1)
    k = np.searchsorted(traj.t, times, side="right")
    start = np.concatenate([[0.0], traj.t])[k]
    values = model.flow.eval(times - start, traj.z[k])
    flags = np.zeros(m + 1, dtype=bool)
    jumps = traj.t[traj.t <= t_end]
    flags[np.searchsorted(times, jumps, side="left") - 1] = True
    return GridSamples(dt=float(dt), times=times, values=np.asarray(values, dtype=float),
                       division_flags=flags)
