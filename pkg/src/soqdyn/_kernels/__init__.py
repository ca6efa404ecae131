"""Hot kernels with a compiled backend and a pure-numpy fallback.

The compiled extension is used when it imports; set ``SOQDYN_PURE_PYTHON=1``
to force the fallback.  Both backends expose the same functions and agree to
rounding.
"""
import os

from . import _pykernels

OK, UNDERFLOW, NONFINITE, MAXSTEPS = 0, 1, 2, 3
STATUS_NAMES = {OK: "ok", UNDERFLOW: "step-size underflow", NONFINITE: "non-finite state",
                MAXSTEPS: "step budget exhausted"}

_ext = None
if os.environ.get("SOQDYN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _ext
    except ImportError:  # extension not built
        _ext = None

python_backend = _pykernels
compiled_backend = _ext
backend = _ext if _ext is not None else _pykernels
BACKEND = backend.BACKEND


def get_backend(name=None):
    """Return the module for ``name`` ('python', 'cython' or None for the active one)."""
    if name is None:
        return backend
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ext is None:
            raise ImportError("compiled kernels are not available")
        return _ext
    raise ValueError(f"unknown backend {name!r}")
