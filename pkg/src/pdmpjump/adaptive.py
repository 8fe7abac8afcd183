"""Projection density estimates on a trigonometric basis with data-driven dimension.

The projection dimension ``M`` is chosen by minimising the penalised contrast
``-sum_{m<=M} alpha_m^2 + c (M + 1) / n`` (orthonormality turns the squared
norm and the empirical cross term into the same sum of squared coefficients).
These densities replace the kernel numerators of the ``k`` and ``ks`` rate
estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DenominatorZero,
    EmptySample,
    NegativeNumerator,
    OutsideProjectionInterval,
    ParameterOutOfRange,
)
from .estimators import (
    DENOMINATOR_FLOOR,
    EstimateCurve,
    _require_deterministic,
    k_denominator_counts,
    ks_denominator_counts,
)
from .model import ModelSpec
from .simulate import Trajectory


@dataclass(frozen=True)
class ProjectionParams:
    a: float = 0.05
    b: float = 3.0
    M_bar: int = 25
    c: float = 1.0

    def __post_init__(self):
        if not self.a < self.b:
            raise ParameterOutOfRange("need a < b")
        if self.M_bar < 0:
            raise ParameterOutOfRange("M_bar must be >= 0")
        if not self.c >= 0:
            raise ParameterOutOfRange("c must be nonnegative")


def _basis_matrix(x, M, a, b):
    """``[len(x), M + 1]`` matrix of basis values, zero outside ``[a, b]``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    L = b - a
    out = np.zeros((x.shape[0], M + 1))
    inside = (x >= a) & (x <= b)
    u = (x[inside] - a) / L
    out[inside, 0] = 1.0 / math.sqrt(L)
    amp = math.sqrt(2.0 / L)
    for m in range(1, M + 1):
        j = (m + 1) // 2
        arg = 2.0 * math.pi * j * u
        out[inside, m] = amp * (np.cos(arg) if m % 2 else np.sin(arg))
    return out


def trig_basis(m: int, a: float, b: float, x):
    if m < 0:
        raise ParameterOutOfRange("m must be >= 0")
    if not a < b:
        raise ParameterOutOfRange("need a < b")
    out = _basis_matrix(x, m, a, b)[:, m]
    return float(out[0]) if np.ndim(x) == 0 else out


def projection_coeffs(samples, M: int, a: float, b: float) -> np.ndarray:
    """Empirical means of ``phi_0, ..., phi_M``; samples outside ``[a, b]`` count as zeros."""
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise EmptySample("no samples to project")
    return _basis_matrix(samples, M, a, b).mean(axis=0)


@dataclass(frozen=True, eq=False)
class ProjectionFit:
    a: float
    b: float
    coeffs: np.ndarray
    M_star: int
    contrast_values: np.ndarray
    c: float
    M_bar: int
    n: int

    def __call__(self, x):
        out = _basis_matrix(x, self.M_star, self.a, self.b) @ self.coeffs
        return float(out[0]) if np.ndim(x) == 0 else out

    def squared_norm(self) -> float:
        return float(np.sum(self.coeffs ** 2))

    def mass(self) -> float:
        """Integral over ``[a, b]``; only the constant basis function has nonzero mean."""
        return float(self.coeffs[0] * math.sqrt(self.b - self.a))

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "M_star": self.M_star, "M_bar": self.M_bar,
                "c": self.c, "n": self.n, "coeffs": [float(v) for v in self.coeffs],
                "contrast": [float(v) for v in self.contrast_values]}


def select_dimension(samples, M_bar: int = 25, c: float = 1.0, a: float = 0.05,
                     b: float = 3.0) -> ProjectionFit:
    params = ProjectionParams(a=a, b=b, M_bar=M_bar, c=c)
    samples = np.asarray(samples, dtype=float).ravel()
    alpha = projection_coeffs(samples, params.M_bar, a, b)
    n = samples.size
    dims = np.arange(params.M_bar + 1)
    contrast = -np.cumsum(alpha ** 2) + c * (dims + 1) / n
    m_star = int(np.argmin(contrast))  # first minimiser, i.e. the smallest M on ties
    return ProjectionFit(a=a, b=b, coeffs=alpha[: m_star + 1].copy(), M_star=m_star,
                         contrast_values=contrast, c=c, M_bar=params.M_bar, n=n)


def _params(fit_params):
    if fit_params is None:
        return ProjectionParams()
    if isinstance(fit_params, dict):
        return ProjectionParams(**fit_params)
    return fit_params


def _fit(samples, p):
    return select_dimension(samples, p.M_bar, p.c, p.a, p.b)


def _check_inside(point, p, what):
    if not p.a <= point <= p.b:
        raise OutsideProjectionInterval(f"{what}={point} outside [{p.a}, {p.b}]")


def _quotient(pref, num, den, where):
    if not den >= DENOMINATOR_FLOOR:
        raise DenominatorZero(f"{where}: empty indicator set")
    if num < 0:
        exc = NegativeNumerator(f"{where}: projected density {num:.3g} is negative")
        exc.value = pref * num / den
        raise exc
    return pref * num / den


def adaptive_lambda_k(traj: Trajectory, x: float, model: ModelSpec, fit_params=None,
                      fit: ProjectionFit | None = None) -> float:
    """Adaptive ``k`` estimate; ``fit`` may carry a precomputed post-jump projection."""
    p = _params(fit_params)
    tr = _require_deterministic(model)
    hx = float(tr.h(x))
    _check_inside(hx, p, "h(x)")
    fit = fit or _fit(traj.z[:-1], p)
    pref = float(tr.h_prime(x)) * float(model.flow.derivative_at_zero(x))
    den = float(k_denominator_counts(traj, [x], model)[0]) / traj.n
    return _quotient(pref, fit(hx), den, f"adaptive k at x={x}")


def adaptive_lambda_ks(traj: Trajectory, x: float, model: ModelSpec, fit_params=None,
                       fit: ProjectionFit | None = None) -> float:
    p = _params(fit_params)
    _check_inside(x, p, "x")
    fit = fit or _fit(traj.z_minus, p)
    pref = float(model.flow.derivative_at_zero(x))
    den = float(ks_denominator_counts(traj, [x])[0]) / traj.n
    return _quotient(pref, fit(float(x)), den, f"adaptive ks at x={x}")


def adaptive_curve(traj: Trajectory, grid, kind: str, model: ModelSpec, fit_params=None):
    """``(EstimateCurve, ProjectionFit)``; negative numerators and empty
    denominators are recorded as failures, points outside ``[a, b]`` raise."""
    p = _params(fit_params)
    grid = np.asarray(grid, dtype=float)
    if kind == "adaptive_k":
        fit, fn = _fit(traj.z[:-1], p), adaptive_lambda_k
    elif kind == "adaptive_ks":
        fit, fn = _fit(traj.z_minus, p), adaptive_lambda_ks
    else:
        raise ParameterOutOfRange(f"unknown adaptive estimator {kind!r}")
    values = np.full(grid.shape[0], np.nan)
    failures = []
    for i, x in enumerate(grid):
        try:
            values[i] = fn(traj, float(x), model, p, fit=fit)
        except (DenominatorZero, NegativeNumerator):
            failures.append(i)
    curve = EstimateCurve(grid=grid, values=values, estimator_kind=kind,
                          bandwidths=(fit.M_star,), n=traj.n, failures=tuple(failures))
    return curve, fit
