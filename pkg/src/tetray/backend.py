"""Kernel backend selection.

The compiled extension (tetray._kernels) is preferred when it imports;
otherwise the vectorized pure-python kernels take over. Both expose the
same module-level API and produce bit-identical traversals. Set
TETRAY_PURE=1 to force the fallback (the benchmark uses this to compare
the two), and note TETRAY_FP64 also forces it, since the compiled kernels
are float32 only.
"""

from __future__ import annotations

import os

from . import _kernels_py

_FORCE_PURE = os.environ.get("TETRAY_PURE", "") not in ("", "0")
_FP64 = bool(os.environ.get("TETRAY_FP64"))

_compiled = None
if not _FORCE_PURE and not _FP64:
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        _compiled = None

_active = _compiled if _compiled is not None else _kernels_py


def active_backend() -> str:
    """Name of the backend in use: 'compiled' or 'pure'."""
    return getattr(_active, "BACKEND_NAME", "pure")


def get_kernels(name: str | None = None):
    """Kernel module by name (None = the active one)."""
    if name in (None, "active"):
        return _active
    if name == "pure":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def has_compiled() -> bool:
    return _compiled is not None
