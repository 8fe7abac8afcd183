"""Selects the compiled kernels when available, the numpy ones otherwise."""

import os

from . import _pycore

if os.environ.get("PDMPJUMP_PURE_PYTHON"):
    core = _pycore
    BACKEND = "python"
else:
    try:
        from . import _core as core

        BACKEND = "cython"
    except ImportError:  # extension not built
        core = _pycore
        BACKEND = "python"

__all__ = ["core", "BACKEND"]
