"""JIT switch for the hot kernels.

Every hot loop is written as a numba-compilable function.  When
``SCENARIO_DP_NUMBA=0`` is set (or numba is missing) the decorator returns
the registered numpy fallback instead, which is usually a vectorized
formulation of the same recursion rather than the loop run uncompiled.
Results are bitwise identical between the two paths; ``benchmarks/`` times
both by spawning one interpreter per setting.
"""

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False



def _enabled(flag) -> bool:
    if flag is not None and flag.strip().lower() in ("0", "false", "no", "off"):
        return False
    return HAVE_NUMBA


USE_NUMBA = _enabled(os.environ.get("SCENARIO_DP_NUMBA"))

numba_default = {
    "nogil": True,
    "cache": True,
    "fastmath": False,
    "boundscheck": False,
    "error_model": "numpy",
}


def kernel(fallback=None):
    """Decorator: njit the function, or hand back ``fallback`` (default: itself)."""

    def wrap(func):
        if USE_NUMBA:
            return numba.njit(**numba_default)(func)
        return fallback if fallback is not None else func

    return wrap


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
