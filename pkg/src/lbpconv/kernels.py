"""Backend selection for the hot kernels.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is imported.  Set ``LBPCONV_BACKEND=python`` to force the fallback or
``LBPCONV_BACKEND=cython`` to make a missing extension an import error.
"""
from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

_requested = os.environ.get("LBPCONV_BACKEND", "").strip().lower()

try:
    from . import _ckernels
except ImportError:
    if _requested == "cython":
        raise
    _ckernels = None

BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels

if _requested == "python" or _ckernels is None:
    active = _pykernels
else:
    active = _ckernels

BACKEND = active.NAME


def get(name: str | None = None) -> ModuleType:
    """Kernel module by name; ``None`` returns the active backend."""
    if name is None:
        return active
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}") from None
