"""Simulation and nonparametric jump-rate estimation for one-dimensional
piecewise-deterministic Markov processes."""

__version__ = "0.1.0"

from ._backend import BACKEND  # noqa: E402

__all__ = ["BACKEND", "__version__"]
