"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when importable; set ``CHLAB_PURE_PYTHON=1``
to force the fallback.  ``IMPLEMENTATION`` names the active one.
"""
import os

from . import _pykernels

IMPLEMENTATION = "python"
_threads = 1

if os.environ.get("CHLAB_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels
    except ImportError:
        _ckernels = None
    else:
        IMPLEMENTATION = "cython"
else:
    _ckernels = None


def set_threads(n):
    """Number of worker threads for per-site kernels (results are identical)."""
    global _threads
    _threads = max(1, int(n))


def get_threads():
    return _threads


def periodic_gradient(f, spacing, order, impl=None):
    mod = _select(impl)
    return mod.periodic_gradient(f, spacing, order)


def torsion_energy_terms(G, T, impl=None):
    mod = _select(impl)
    if mod is _pykernels:
        return mod.torsion_energy_terms(G, T)
    return mod.torsion_energy_terms(G, T, _threads)


def available():
    """Implementations importable in this process."""
    return ["python"] + (["cython"] if _ckernels is not None else [])


def _select(impl):
    if impl is None:
        impl = IMPLEMENTATION
    if impl == "python":
        return _pykernels
    if impl == "cython":
        if _ckernels is None:
            raise ImportError("compiled kernels are not built")
        return _ckernels
    raise ValueError(f"unknown kernel implementation {impl!r}")
