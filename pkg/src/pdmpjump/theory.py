"""Closed-form and quadrature quantities attached to a model.

For the TCP process the invariant densities of the embedded chain (``mu``),
of the pre-jump chain (``mu_minus``) and of the continuous-time process
(``mu_ct``) are alternating series in ``exp(-kappa^(-2n) x^2 / 2)``; the
asymptotic variances of the three estimator families follow from them.
Generic models go through numerical quadrature of the hazard.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import DegenerateDenominator, ParameterOutOfRange, QuadratureFailure, SeriesDiverged
from .model import ModelSpec

EPANECHNIKOV_TAU2 = 0.6
QUAD_TOL = 1e-9
# reachable-set discretisation for the argmax estimators
CX_STEP = 0.01
CX_EPS = 0.01


@dataclass(frozen=True)
class SeriesTolerance:
    abs_tol: float = 1e-12
    max_terms: int = 200

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ParameterOutOfRange("abs_tol must be positive")
        if self.max_terms < 1:
            raise ParameterOutOfRange("max_terms must be >= 1")


DEFAULT_TOL = SeriesTolerance()


def _check_kappa(kappa):
    if not 0.0 < kappa < 1.0:
        raise ParameterOutOfRange(f"kappa must lie in (0, 1), got {kappa}")


@functools.lru_cache(maxsize=64)
def _infinite_product(kappa: float, odd: bool) -> float:
    """prod_{n>=1} (1 - kappa^(2n))  or  prod_{n>=0} (1 - kappa^(2n+1))."""
    p = 1.0
    k = 0 if odd else 1
    while True:
        f = kappa ** (2 * k + 1) if odd else kappa ** (2 * k)
        if f < 1e-18:
            return p
        p *= 1.0 - f
        k += 1


def _decay_start(kappa: float) -> int:
    # from this index on the series coefficients shrink in magnitude
    n = 1
    while kappa ** (-2 * n) < 1.0 + kappa ** (-2):
        n += 1
    return n + 1


def _series(x, kappa, tol, first, log_coeff, with_x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ParameterOutOfRange("the TCP state space is [0, inf)")
    total = np.zeros_like(x)
    start = _decay_start(kappa)
    log_k = math.log(kappa)
    lc = 0.0
    sign = 1.0
    for n in range(first, first + tol.max_terms):
        lc, sign = log_coeff(n, lc, sign)
        q = math.exp(-2.0 * n * log_k) if -2.0 * n * log_k < 700 else math.inf
        with np.errstate(over="ignore", invalid="ignore"):
            expo = 0.5 * q * x * x
        expo = np.where(x == 0.0, 0.0, expo)
        term = np.exp(lc - expo)
        if with_x:
            term = term * x
        total += sign * term
        if n - first + 1 >= start and np.max(np.abs(term), initial=0.0) < tol.abs_tol:
            return total
    raise SeriesDiverged(f"series not converged after {tol.max_terms} terms")


def tcp_mu(x, kappa: float, tol: SeriesTolerance = DEFAULT_TOL):
    """Invariant density of the post-jump chain of the TCP process."""
    _check_kappa(kappa)
    log_k = math.log(kappa)

    def log_coeff(n, lc, sign):
        # kappa^(-2n) / prod_{k=1}^{n-1} (1 - kappa^(-2k)); empty product for n = 1
        if n == 1:
            return -2.0 * log_k, 1.0
        f = 1.0 - kappa ** (-2 * (n - 1))
        return lc - 2.0 * log_k - math.log(abs(f)), sign * math.copysign(1.0, f)

    out = _series(x, kappa, tol, 1, log_coeff, True) / _infinite_product(kappa, False)
    # cancellation leaves ~1e-16 noise of either sign near 0
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def tcp_mu_ct(x, kappa: float, tol: SeriesTolerance = DEFAULT_TOL):
    """Invariant density of the continuous-time TCP process."""
    _check_kappa(kappa)
    log_k = math.log(kappa)

    def log_coeff(n, lc, sign):
        if n == 0:
            return 0.0, 1.0
        f = 1.0 - kappa ** (-2 * n)
        return lc - 2.0 * log_k - math.log(abs(f)), sign * math.copysign(1.0, f)

    out = _series(x, kappa, tol, 0, log_coeff, False)
    out = np.maximum(out * math.sqrt(2.0 / math.pi) / _infinite_product(kappa, True), 0.0)
    return float(out) if np.ndim(out) == 0 else out


def tcp_mu_minus(x, kappa: float, tol: SeriesTolerance = DEFAULT_TOL):
    """Invariant density of the pre-jump chain, ``kappa * mu(kappa * x)``."""
    return kappa * tcp_mu(kappa * np.asarray(x, dtype=float), kappa, tol)


def _quad(f, a, b, tol):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(f, a, b, epsabs=tol, epsrel=0.0, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureFailure(str(exc)) from exc
    if not err <= tol:
        raise QuadratureFailure(f"quadrature error estimate {err:.3g} exceeds {tol:.3g}")
    return val


def cumulative_hazard(model: ModelSpec, xi: float, t: float, quad_tol=QUAD_TOL, method="auto"):
    """``int_0^t lambda(Phi(s | xi)) ds``.

    ``method="auto"`` uses the rate antiderivative when the flow has constant
    speed and falls back to quadrature otherwise; ``"quad"`` forces quadrature.
    """
    if t < 0:
        raise ParameterOutOfRange("t must be nonnegative")
    if model.rate is None:
        raise ParameterOutOfRange("model has no jump rate attached")
    speed = model.flow.speed
    if method == "auto" and speed is not None and model.rate.antiderivative is not None:
        anti = model.rate.antiderivative
        return float(anti(xi + speed * t) - anti(xi)) / speed
    if t == 0:
        return 0.0
    rate, flow = model.rate.eval, model.flow.eval
    return _quad(lambda s: rate(flow(s, xi)), 0.0, t, quad_tol)


def survival_G(model: ModelSpec, xi: float, t: float, quad_tol=QUAD_TOL, method="auto") -> float:
    """Conditional survival of the inter-jump time started from ``xi``."""
    return math.exp(-cumulative_hazard(model, xi, t, quad_tol, method))


def conditional_density_f(model: ModelSpec, xi: float, t: float, quad_tol=QUAD_TOL) -> float:
    lam = float(model.rate.eval(model.flow.eval(t, xi)))
    return lam * survival_G(model, xi, t, quad_tol)


def r_density(model: ModelSpec, x: float, z: float, quad_tol=QUAD_TOL) -> float:
    """Density at ``z`` of the next pre-jump location given the current post-jump ``x``."""
    if z < x:
        return 0.0
    rate = model.rate.eval
    delta = model.flow.derivative_at_zero
    speed = model.flow.speed
    if speed is not None and model.rate.antiderivative is not None:
        anti = model.rate.antiderivative
        integral = float(anti(z) - anti(x)) / speed
    else:
        integral = _quad(lambda u: rate(u) / delta(u), x, z, quad_tol)
    return float(rate(z)) / float(delta(z)) * math.exp(-integral)


def cx_grid(x: float, step: float = CX_STEP, eps: float = CX_EPS) -> np.ndarray:
    """Grid ``{eps, eps + step, ...}`` of starting points from which ``x`` is reachable."""
    count = int(math.floor((x - eps) / step + 1e-9)) + 1
    if count <= 0:
        return np.empty(0)
    return np.round(eps + step * np.arange(count), 12)


def tcp_oracle_criterion(xi, x: float, kappa: float):
    """``mu(xi) * G(x - xi | xi)`` for the TCP process (``G = exp(-(x^2 - xi^2) / 2)``)."""
    xi = np.asarray(xi, dtype=float)
    return tcp_mu(xi, kappa) * np.exp(-0.5 * (x * x - xi * xi))


def tcp_oracle_argmax(x: float, kappa: float, grid=None) -> float:
    grid = cx_grid(x) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DegenerateDenominator(f"empty reachable grid at x={x}")
    crit = tcp_oracle_criterion(grid, x, kappa)
    m = int(np.argmax(crit))
    if not crit[m] > 0:
        raise DegenerateDenominator(f"oracle criterion vanishes on the grid at x={x}")
    return float(grid[m])


def sigma_k2(x, kappa: float, tau2: float = EPANECHNIKOV_TAU2) -> float:
    """Asymptotic variance of the estimator built on the fragmentation map."""
    mum = tcp_mu_minus(x, kappa)
    if not mum > 0:
        raise DegenerateDenominator(f"mu_minus({x}) = {mum} is not positive")
    return tau2 * x * x * kappa / mum


def sigma_ks2(x, kappa: float, tau2: float = EPANECHNIKOV_TAU2) -> float:
    """Asymptotic variance of the estimator built on the pre-jump density."""
    mum = tcp_mu_minus(x, kappa)
    if not mum > 0:
        raise DegenerateDenominator(f"mu_minus({x}) = {mum} is not positive")
    return tau2 * x * x / mum


def sigma_amg2(x, kappa: float, tau2: float = EPANECHNIKOV_TAU2, grid=None) -> float:
    """Asymptotic variance of the oracle argmax estimator (maximum over the grid)."""
    grid = cx_grid(x) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DegenerateDenominator(f"empty reachable grid at x={x}")
    best = float(np.max(tcp_oracle_criterion(grid, x, kappa)))
    if not best > 0:
        raise DegenerateDenominator(f"oracle criterion vanishes at x={x}")
    return tau2 * tau2 * x / best


@dataclass(frozen=True)
class VarianceCurves:
    grid: np.ndarray
    sigma_k2: np.ndarray
    sigma_ks2: np.ndarray
    sigma_amg2: np.ndarray
    tau2: float


def _or_nan(fn, x, kappa, tau2):
    try:
        return fn(x, kappa, tau2)
    except DegenerateDenominator:
        return math.nan


def variance_curves(grid, kappa: float, tau2: float = EPANECHNIKOV_TAU2) -> VarianceCurves:
    """Variances on ``grid``; NaN where the density is below floating-point resolution."""
    grid = np.asarray(grid, dtype=float)
    return VarianceCurves(
        grid=grid,
        sigma_k2=np.array([_or_nan(sigma_k2, x, kappa, tau2) for x in grid]),
        sigma_ks2=np.array([_or_nan(sigma_ks2, x, kappa, tau2) for x in grid]),
        sigma_amg2=np.array([_or_nan(sigma_amg2, x, kappa, tau2) for x in grid]),
        tau2=tau2,
    )


@dataclass(frozen=True)
class NormalizedCurves:
    """Standard deviations normalised by the convergence rate at fixed bandwidths."""

    grid: np.ndarray
    sd_k: np.ndarray
    sd_ks: np.ndarray
    sd_amg: np.ndarray
    n: int
    bandwidths: dict


def normalized_sd_curves(n: int, bandwidths: dict, grid, kappa: float,
                         tau2: float = EPANECHNIKOV_TAU2) -> NormalizedCurves:
    """``bandwidths`` maps ``"k"`` and ``"ks"`` to scalars and ``"amg"`` to ``(h_s, h_t)``."""
    h_k, h_ks = float(bandwidths["k"]), float(bandwidths["ks"])
    h_s, h_t = (float(v) for v in bandwidths["amg"])
    if min(h_k, h_ks, h_s, h_t) <= 0:
        raise ParameterOutOfRange("bandwidths must be positive")
    curves = variance_curves(grid, kappa, tau2)
    return NormalizedCurves(
        grid=curves.grid,
        sd_k=np.sqrt(curves.sigma_k2 / (n * h_k)),
        sd_ks=np.sqrt(curves.sigma_ks2 / (n * h_ks)),
        sd_amg=np.sqrt(curves.sigma_amg2 / (n * h_s * h_t)),
        n=n,
        bandwidths={"k": h_k, "ks": h_ks, "amg": [h_s, h_t]},
    )


def sign_changes(grid, diff) -> list:
    """Midpoints between consecutive finite, nonzero-sign grid values where
    ``diff`` changes sign; NaN entries and exact zeros are skipped."""
    grid = np.asarray(grid, dtype=float)
    s = np.sign(np.asarray(diff, dtype=float))
    keep = np.isfinite(s) & (s != 0)
    g, s = grid[keep], s[keep]
    return [float(0.5 * (g[i] + g[i - 1])) for i in range(1, s.size) if s[i] != s[i - 1]]


def theory_table(grid, kappa: float, tau2: float = EPANECHNIKOV_TAU2) -> dict:
    """Columns ``x, mu, mu_ct, mu_minus, sigma_k, sigma_ks, sigma_amg`` (standard deviations)."""
    grid = np.asarray(grid, dtype=float)
    curves = variance_curves(grid, kappa, tau2)
    return {
        "x": grid,
        "mu": np.asarray(tcp_mu(grid, kappa)),
        "mu_ct": np.asarray(tcp_mu_ct(grid, kappa)),
        "mu_minus": np.asarray(tcp_mu_minus(grid, kappa)),
        "sigma_k": np.sqrt(curves.sigma_k2),
        "sigma_ks": np.sqrt(curves.sigma_ks2),
        "sigma_amg": np.sqrt(curves.sigma_amg2),
    }
