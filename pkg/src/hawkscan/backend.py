"""Backend selection for the hot numeric kernels.

Two interchangeable implementations exist: a numba-compiled one
(`hawkscan._engine_numba`) and a pure-numpy one (`hawkscan._engine_numpy`).
Both expose the same function names and signatures and produce the same
results up to floating-point summation order.

Selection happens once at import time:

* ``HAWKSCAN_BACKEND=numpy`` forces the numpy fallback,
* ``HAWKSCAN_BACKEND=numba`` forces numba (ImportError if unavailable),
* unset: numba when importable, numpy otherwise.
"""

from __future__ import annotations

import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

_requested = os.environ.get("HAWKSCAN_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"HAWKSCAN_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )
if _requested == "numba" and not HAS_NUMBA:
    raise RuntimeError("HAWKSCAN_BACKEND=numba but numba is not importable")

USE_NUMBA = HAS_NUMBA if _requested == "" else _requested == "numba"
BACKEND = "numba" if USE_NUMBA else "numpy"


def backend_name() -> str:
    """Name of the active kernel backend ('numba' or 'numpy')."""
    return BACKEND


def get_engine():
    """Return the active kernel module (import deferred to first use)."""
    if USE_NUMBA:
        from . import _engine_numba as eng
    else:
        from . import _engine_numpy as eng
    return eng
