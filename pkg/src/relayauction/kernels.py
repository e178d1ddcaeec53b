"""Selects the compiled kernels when available, else the NumPy fallback.

Set ``RELAYAUCTION_PURE_PYTHON=1`` to force the fallback.
"""

import importlib
import os

import numpy as np


def load_backend(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "cython":
        return importlib.import_module("relayauction._ckernels")
    if name == "python":
        return importlib.import_module("relayauction._pykernels")
    raise ValueError(f"unknown kernel backend {name!r}")


if os.environ.get("RELAYAUCTION_PURE_PYTHON", "") not in ("", "0"):
    _impl = load_backend("python")
    BACKEND = "python"
else:
    try:
        _impl = load_backend("cython")
        BACKEND = "cython"
    except ImportError:
        _impl = load_backend("python")
        BACKEND = "python"


def iterate_bids(bids, coef, reserve, lower, upper, active, tol, window, streak, out):
    return _impl.iterate_bids(bids, np.ascontiguousarray(coef, dtype=float),
                              np.ascontiguousarray(reserve, dtype=float),
                              np.ascontiguousarray(lower, dtype=float),
                              np.ascontiguousarray(upper, dtype=float),
                              np.ascontiguousarray(active, dtype=np.uint8),
                              float(tol), int(window), int(streak), out)


def efficiency_search(snr, active, counts, gamma, bandwidth):
    return _impl.efficiency_search(np.ascontiguousarray(snr, dtype=float),
                                   np.ascontiguousarray(active, dtype=np.uint8),
                                   np.ascontiguousarray(counts, dtype=np.intp),
                                   np.ascontiguousarray(gamma, dtype=float), float(bandwidth))
