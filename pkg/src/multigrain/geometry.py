"""Geometry kernel dispatch: compiled extension when available, else pure Python.

Both backends share one contract (see `_geometry_py` for the reference
semantics); `KERNEL_IMPLEMENTATION` records which one was picked.
Setting MULTIGRAIN_PURE=1 forces the fallback (used by the benchmark).
"""

from __future__ import annotations

import os

from . import _geometry_py

try:
    if os.environ.get("MULTIGRAIN_PURE") == "1":
        raise ImportError("pure Python kernels forced via MULTIGRAIN_PURE")
    from . import _speedups as _impl
except ImportError:  # extension not built; pure Python is fully equivalent
    _impl = _geometry_py

KERNEL_IMPLEMENTATION: str = _impl.IMPLEMENTATION
HAVE_SPEEDUPS: bool = KERNEL_IMPLEMENTATION == "cython"

square_crop = _impl.square_crop
ioa_parts = _impl.ioa_parts
qualifying_neighbors = _impl.qualifying_neighbors
grid_cell = _impl.grid_cell


def ioa(sx: int, sy: int, side: int, rx: int, ry: int, rw: int, rh: int) -> float:
    """Intersection-over-area of square S and box R: Area(S ∩ R) / Area(R)."""
    inter, area = ioa_parts(sx, sy, side, rx, ry, rw, rh)
    if area <= 0:
        raise ValueError("box area must be positive")
    return inter / area
