"""Backend selection for the hot loops.

Two interchangeable implementations live here: a JIT-compiled one (numba)
and a pure-numpy reference. The CROSSE_BACKEND environment variable picks
one: "numba", "numpy", or "auto" (default; numba when importable). The
choice never changes results beyond float round-off: negative sampling is
integer-exact across backends.
"""

from __future__ import annotations

import logging
import os

log = logging.getLogger(__name__)

_BACKENDS = ("auto", "numba", "numpy")
_cache: dict = {}


def _load(name: str):
    if name == "numpy":
        from . import _numpy
        return _numpy
    if name == "numba":
        from . import _numba
        return _numba
    raise ValueError(f"unknown kernel backend {name!r} (expected one of {_BACKENDS})")


def get_kernels(name: str | None = None):
    """Resolve the kernel module. `name` overrides CROSSE_BACKEND."""
    if name is None:
        name = os.environ.get("CROSSE_BACKEND", "auto")
    if name not in _BACKENDS:
        raise ValueError(f"invalid CROSSE_BACKEND={name!r} (expected one of {_BACKENDS})")
    if name in _cache:
        return _cache[name]
    if name == "auto":
        try:
            mod = _load("numba")
        except ImportError as exc:
            log.info("numba unavailable (%s); using numpy kernels", exc)
            mod = _load("numpy")
    else:
        mod = _load(name)
    _cache[name] = mod
    return mod


def backend_name(name: str | None = None) -> str:
    return get_kernels(name).NAME
