"""Kernel backend selection.

The conic solver's hot loops exist twice: compiled with numba
(``_numba``) and as a pure-numpy fallback (``_numpy``). The active
implementation is picked once at import time from the environment flag
``MICPLAN_KERNELS`` (``numba`` | ``numpy``; default prefers numba and
silently falls back if it cannot be imported). Callers that want a
specific implementation regardless of the flag (tests, benchmarks) can
import ``_numpy`` / ``_numba`` directly and pass the module around.
"""

import os

from . import _numpy

_choice = os.environ.get("MICPLAN_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "", "numba", "numpy"):
    raise ValueError(
        f"MICPLAN_KERNELS={_choice!r} (expected 'numba' or 'numpy')")

if _choice == "numpy":
    active = _numpy
else:
    try:
        from . import _numba
        active = _numba
    except ImportError:
        if _choice == "numba":
            raise
        active = _numpy


def backend_name() -> str:
    """Name of the kernel implementation selected at import time."""
    return active.NAME
