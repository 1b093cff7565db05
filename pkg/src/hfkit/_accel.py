"""Backend selection for the numeric kernels.

Numba is used when importable unless ``HF_NO_NUMBA`` is set to a truthy
value; the pure-numpy kernels are then used instead. ``HF_THREADS`` caps
the numba thread pool.
"""
import os

try:
    import numba
    from numba import njit, prange

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    numba = None
    NUMBA_AVAILABLE = False
    prange = range

    def njit(*args, **kwargs):
        def wrapper(func):
            return func

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return wrapper


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() in {"1", "true", "yes", "on"}


_state = {"numba": NUMBA_AVAILABLE and not _env_flag("HF_NO_NUMBA")}


def use_numba():
    return _state["numba"]


def set_backend(name):
    """Switch kernels to ``"numba"`` or ``"numpy"``; returns the previous name."""
    prev = backend()
    if name == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError("numba is not installed")
        _state["numba"] = True
    elif name == "numpy":
        _state["numba"] = False
    else:
        raise ValueError(f"unknown backend {name!r}")
    return prev


def backend():
    return "numba" if _state["numba"] else "numpy"


def _apply_thread_cap():
    cap = os.environ.get("HF_THREADS")
    if not cap or not NUMBA_AVAILABLE:
        return
    try:
        n = int(cap)
    except ValueError:
        return
    n = max(1, min(n, numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)


def _prefer_threading_layer():
    # an outdated system TBB is probed first by default and warns on every run
    if NUMBA_AVAILABLE and "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


_prefer_threading_layer()
_apply_thread_cap()
