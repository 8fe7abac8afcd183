"""Local characteristics of one-dimensional PDMPs.

A model is the triplet (flow, jump rate, transition) plus the state-space
support.  Two families are shipped: the TCP process (linear flow, linear rate,
deterministic fragmentation ``x -> kappa * x``) and a log-size cell growth
model (linear flow with slope ``theta`` and Gaussian division ratios).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ParameterOutOfRange, Unreachable

# rejection sampling of the truncated division ratio gives up after this many
# draws; only reachable when almost no Gaussian mass lies in (0, 1)
_MAX_REJECTIONS = 10_000


@dataclass(frozen=True)
class FlowSpec:
    eval: Callable  # (t, x) -> state
    inverse_time: Callable  # (xi, x) -> time such that eval(time, xi) == x
    derivative_at_zero: Callable  # x -> d/dt eval(t, x) at t = 0
    speed: Optional[float] = None  # set when eval(t, x) == x + speed * t


@dataclass(frozen=True)
class JumpRateSpec:
    eval: Callable  # x -> rate >= 0
    antiderivative: Optional[Callable] = None  # x -> integral of eval up to x
    label: str = ""

    def __call__(self, x):
        return self.eval(x)


@dataclass(frozen=True)
class Deterministic:
    """Post-jump location ``h(x)`` with ``h`` increasing and ``h(x) <= x``."""

    h: Callable
    h_prime: Callable
    h_inverse: Optional[Callable] = None
    kind: str = field(default="deterministic", init=False)

    def apply(self, x, rng=None):
        return self.h(x)


@dataclass(frozen=True)
class RandomRatio:
    """Random post-jump location drawn by ``sampler(x, rng)``."""

    sampler: Callable
    ratio_mean: float = float("nan")
    ratio_sd: float = float("nan")
    kind: str = field(default="random_ratio", init=False)

    def apply(self, x, rng):
        return self.sampler(x, rng)


TransitionSpec = Deterministic | RandomRatio


@dataclass(frozen=True)
class ModelSpec:
    flow: FlowSpec
    rate: Optional[JumpRateSpec]
    transition: TransitionSpec
    support: tuple = (0.0, math.inf)
    label: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.support
        if not lo < hi:
            raise ParameterOutOfRange(f"empty support {self.support}")

    @property
    def kind(self) -> str:
        return self.params.get("kind", "custom")

    def with_rate(self, rate: JumpRateSpec) -> "ModelSpec":
        return dataclasses.replace(self, rate=rate)

    def to_config(self) -> dict:
        """JSON-ready description used in configuration files and manifests."""
        return dict(self.params)


def _constant(value: float) -> Callable:
    def f(x):
        if np.ndim(x):
            return np.full(np.shape(x), value, dtype=float)
        return float(value)

    return f


def _tcp_inverse_time(xi, x):
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(x < xi):
        raise Unreachable("the TCP flow is increasing: x must be >= xi")
    out = x - xi
    return float(out) if out.ndim == 0 else out


def tcp_inverse_time(xi: float, x: float) -> float:
    """Time needed by the TCP flow to go from ``xi`` to ``x``."""
    return _tcp_inverse_time(xi, x)


def linear_flow(speed: float) -> FlowSpec:
    def inverse_time(xi, x):
        xi = np.asarray(xi, dtype=float)
        x = np.asarray(x, dtype=float)
        if np.any(x < xi):
            raise Unreachable("a flow with positive speed is increasing: x must be >= xi")
        out = (x - xi) / speed
        return float(out) if out.ndim == 0 else out

    return FlowSpec(
        eval=lambda t, x: x + speed * t,
        inverse_time=inverse_time,
        derivative_at_zero=_constant(speed),
        speed=float(speed),
    )


def identity_rate() -> JumpRateSpec:
    return JumpRateSpec(
        eval=lambda x: np.asarray(x, dtype=float) if np.ndim(x) else float(x),
        antiderivative=lambda x: 0.5 * np.asarray(x, dtype=float) ** 2
        if np.ndim(x)
        else 0.5 * float(x) ** 2,
        label="lambda(x)=x",
    )


def tcp_model(kappa: float) -> ModelSpec:
    if not 0.0 < kappa < 1.0:
        raise ParameterOutOfRange(f"kappa must lie in (0, 1), got {kappa}")
    transition = Deterministic(
        h=lambda x: kappa * x,
        h_prime=_constant(kappa),
        h_inverse=lambda y: y / kappa,
    )
    flow = linear_flow(1.0)
    flow = dataclasses.replace(flow, inverse_time=_tcp_inverse_time)
    return ModelSpec(
        flow=flow,
        rate=identity_rate(),
        transition=transition,
        support=(0.0, math.inf),
        label=f"tcp(kappa={kappa})",
        params={"kind": "tcp", "kappa": float(kappa)},
    )


def truncated_ratio_sampler(ratio_mean: float, ratio_sd: float) -> Callable:
    """Log-size division: ``x + log K`` with ``K ~ N(mean, sd^2)`` restricted to (0, 1)."""
    log_mean = math.log(ratio_mean)

    def sample(x, rng):
        if ratio_sd == 0.0:
            return x + log_mean
        for _ in range(_MAX_REJECTIONS):
            k = rng.normal(ratio_mean, ratio_sd)
            if 0.0 < k < 1.0:
                return x + math.log(k)
        raise ParameterOutOfRange("division ratio law puts no mass on (0, 1)")

    return sample


def growth_model(theta: float, ratio_mean: float, ratio_sd: float) -> ModelSpec:
    """Log-size growth/division model without a jump rate (see :func:`attach_rate`)."""
    if not theta > 0:
        raise ParameterOutOfRange(f"theta must be positive, got {theta}")
    if not 0.0 < ratio_mean < 1.0:
        raise ParameterOutOfRange(f"ratio_mean must lie in (0, 1), got {ratio_mean}")
    if not ratio_sd >= 0:
        raise ParameterOutOfRange(f"ratio_sd must be nonnegative, got {ratio_sd}")
    transition = RandomRatio(
        sampler=truncated_ratio_sampler(ratio_mean, ratio_sd),
        ratio_mean=float(ratio_mean),
        ratio_sd=float(ratio_sd),
    )
    return ModelSpec(
        flow=linear_flow(theta),
        rate=None,
        transition=transition,
        # log-size lives on the whole real line
        support=(-math.inf, math.inf),
        label=f"growth(theta={theta})",
        params={
            "kind": "growth",
            "theta": float(theta),
            "ratio_mean": float(ratio_mean),
            "ratio_sd": float(ratio_sd),
        },
    )


def attach_rate(model: ModelSpec, rate: JumpRateSpec) -> ModelSpec:
    return model.with_rate(rate)


def rate_from_curve(grid, values, label: str = "tabulated") -> JumpRateSpec:
    """Piecewise-linear rate through ``(grid, values)``, constant outside the grid.

    NaN entries (failed estimates) are dropped before interpolation.
    """
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = np.isfinite(values)
    g, v = grid[keep], values[keep]
    if g.size == 0:
        raise ParameterOutOfRange("rate curve has no finite value")
    if np.any(v < 0):
        raise ParameterOutOfRange("rate curve must be nonnegative")
    if g.size == 1:
        g = np.array([g[0], g[0] + 1.0])
        v = np.array([v[0], v[0]])
    order = np.argsort(g)
    g, v = g[order], v[order]
    # antiderivative at the nodes (trapezoids are exact for linear pieces)
    nodes = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * np.diff(g))])

    def evaluate(x):
        out = np.interp(x, g, v)
        return float(out) if np.ndim(out) == 0 else out

    def antiderivative(x):
        x = np.asarray(x, dtype=float)
        k = np.clip(np.searchsorted(g, x, side="right") - 1, 0, g.size - 2)
        d = x - g[k]
        slope = (v[k + 1] - v[k]) / (g[k + 1] - g[k])
        inside = nodes[k] + v[k] * d + 0.5 * slope * d * d
        out = np.where(x < g[0], v[0] * (x - g[0]), inside)
        out = np.where(x > g[-1], nodes[-1] + v[-1] * (x - g[-1]), out)
        return float(out) if out.ndim == 0 else out

    return JumpRateSpec(eval=evaluate, antiderivative=antiderivative, label=label)


def model_from_config(cfg: dict) -> ModelSpec:
    """Build a model from ``{"kind": "tcp", "kappa": 0.4}``-style dictionaries."""
    kind = cfg.get("kind")
    if kind == "tcp":
        return tcp_model(float(cfg["kappa"]))
    if kind == "growth":
        return growth_model(float(cfg["theta"]), float(cfg["ratio_mean"]), float(cfg["ratio_sd"]))
    raise ParameterOutOfRange(f"unknown model kind {kind!r}")
