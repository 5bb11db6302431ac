"""Kernel backend selection: compiled extension when built, pure python otherwise."""

from __future__ import annotations

import os
from typing import Optional, Tuple

from . import _kernels_py

_BACKENDS = {"python": _kernels_py}
try:
    from . import _kernels as _kernels_compiled

    _BACKENDS["compiled"] = _kernels_compiled
except ImportError:
    _kernels_compiled = None


def available_backends() -> Tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def resolve(name: Optional[str] = None):
    """Pick a kernel module by name, the MAXBOUND_BACKEND variable, or
    default to the compiled one when present.  Returns (name, module)."""
    if name is None:
        name = os.environ.get("MAXBOUND_BACKEND", "auto")
    if name in ("", "auto"):
        name = "compiled" if "compiled" in _BACKENDS else "python"
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    return name, _BACKENDS[name]


BACKEND = resolve()[0]
