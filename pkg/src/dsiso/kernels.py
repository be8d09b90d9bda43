"""Kernel backend selection.

The compiled extension is used when it imports; set ``DSISO_PURE_PYTHON=1``
to force the NumPy fallback.
"""
import os

from . import _pykernels

try:
    if os.environ.get("DSISO_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python backend forced")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

DEFAULT_BACKEND = "cython" if _ckernels is not None else "python"


def get_backend(name=None):
    name = name or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
