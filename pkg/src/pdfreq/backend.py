"""Numba/numpy backend selection for the hot kernels.

The simulation and training inner loops exist in two implementations: a
numba ``@njit`` version (explicit loops, default) and a vectorized pure-numpy
fallback.  Selection happens once at import time through the environment
variable ``PDFREQ_BACKEND``:

    PDFREQ_BACKEND=numba   use the jitted kernels (default when numba imports)
    PDFREQ_BACKEND=numpy   force the pure-numpy path

``benchmarks/bench_backends.py`` compares the two paths on representative
workloads; the test suite asserts they agree numerically.
"""

import os

_VALID = ("numba", "numpy")


def _detect() -> str:
    requested = os.environ.get("PDFREQ_BACKEND", "").strip().lower()
    if requested and requested not in _VALID:
        raise RuntimeError(
            f"PDFREQ_BACKEND={requested!r} not understood; expected one of {_VALID}"
        )
    if requested == "numpy":
        return "numpy"
    try:
        import numba  # noqa: F401
    except ImportError:
        if requested == "numba":
            raise RuntimeError("PDFREQ_BACKEND=numba but numba is not installed")
        return "numpy"
    return "numba"


ACTIVE = _detect()


def active_backend() -> str:
    """Name of the kernel backend selected at import time."""
    return ACTIVE


def njit(func):
    """Apply ``numba.njit(cache=True)`` when the numba backend is active.

    Under the numpy backend the function is returned untouched, so modules can
    decorate loop kernels unconditionally.
    """
    if ACTIVE == "numba":
        import numba

        return numba.njit(cache=True)(func)
    return func
