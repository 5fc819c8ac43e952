"""Kernel backend selection.

The compiled core is used when it imports; set ``OCCVDB_BACKEND=python`` to
force the pure-Python kernels.
"""
import os

from . import _pycore

BACKENDS = {"python": _pycore}

try:
    from . import _core
except ImportError:  # extension not built
    _core = None
else:
    BACKENDS["compiled"] = _core

_requested = os.environ.get("OCCVDB_BACKEND", "").strip().lower()
if _requested and _requested not in ("python", "compiled"):
    raise ImportError(f"OCCVDB_BACKEND must be 'python' or 'compiled', got {_requested!r}")
if _requested == "compiled" and _core is None:
    raise ImportError("OCCVDB_BACKEND=compiled but occvdb._core is not built")

ACTIVE = BACKENDS[_requested] if _requested else BACKENDS.get("compiled", _pycore)


def get(name=None):
    if name is None:
        return ACTIVE
    if not isinstance(name, str):
        return name
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} is not available (have: {sorted(BACKENDS)})") from None


def available():
    return sorted(BACKENDS)
