"""Numba switch.

Hot kernels are written twice: a numba ``@njit`` version that loops over the
batch, and a vectorised numpy version. ``SPAIS_NUMBA=0`` in the environment
forces the numpy path; the numpy path is also used when numba is missing.
"""
import os

try:
    import numba
    from numba import njit, prange
    HAS_NUMBA = True
    # the bundled TBB is too old on some hosts; workqueue is always available
    if os.environ.get("NUMBA_THREADING_LAYER") is None:
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(fn):
            return fn
        return wrap

    prange = range


def _flag_enabled():
    value = os.environ.get("SPAIS_NUMBA", "1").strip().lower()
    return value not in ("0", "false", "no", "off")


def use_numba():
    """True when the numba kernels should be used (checked at call time)."""
    return HAS_NUMBA and _flag_enabled()


def set_threads(n):
    """Cap the numba worker pool. No-op without numba."""
    if HAS_NUMBA and n is not None:
        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


__all__ = ["HAS_NUMBA", "njit", "prange", "use_numba", "set_threads"]
