"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
fallback.  ``KACZMARZ_BACKEND`` (``auto``, ``compiled``, ``python``)
overrides the choice at import time.
"""
import os

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["compiled"] = _ckernels


def available():
    """Names of the usable backends, fastest first."""
    return [k for k in ("compiled", "python") if k in _BACKENDS]


def get(name=None):
    """Return the kernel module called ``name`` (``None`` means the default)."""
    if name is None:
        return kernels
    if name == "auto":
        return _BACKENDS[available()[0]]
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available()}") from None


def _select():
    choice = os.environ.get("KACZMARZ_BACKEND", "auto").strip().lower() or "auto"
    return get(choice)


kernels = _select()
