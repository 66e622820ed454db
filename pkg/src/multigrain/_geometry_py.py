"""Pure-Python geometry kernels.

Reference implementation of the hot per-image loops; `_speedups.pyx`
mirrors these signatures exactly and is preferred at import time when
compiled.  All arithmetic is exact integer arithmetic.
"""

from __future__ import annotations

IMPLEMENTATION = "python"


def square_crop(x: int, y: int, w: int, h: int, canvas: int = 224) -> tuple:
    """Smallest integer square containing the box, center-aligned.

    Side is max(w, h); the square's center matches the box center when
    that placement fits, otherwise the square is shifted the minimum
    distance that keeps it inside the canvas.  Half-pixel ties round
    toward the smaller origin.
    """
    side = w if w >= h else h
    if side > canvas:
        raise ValueError(f"impossible crop: side {side} exceeds canvas {canvas}")

    def _axis(pos: int, dim: int) -> int:
        lo = pos + dim - side
        if lo < 0:
            lo = 0
        hi = canvas - side
        if pos < hi:
            hi = pos
        cand = (2 * pos + dim - side) // 2
        if cand < lo:
            return lo
        if cand > hi:
            return hi
        return cand

    return _axis(x, w), _axis(y, h), side


def ioa_parts(sx: int, sy: int, side: int, rx: int, ry: int, rw: int, rh: int) -> tuple:
    """(intersection area, box area) of square S and box R, exact ints."""
    ix = sx if sx >= rx else rx
    iy = sy if sy >= ry else ry
    ix2 = min(sx + side, rx + rw)
    iy2 = min(sy + side, ry + rh)
    iw = ix2 - ix
    ih = iy2 - iy
    inter = iw * ih if iw > 0 and ih > 0 else 0
    return inter, rw * rh


def qualifying_neighbors(
    sx: int,
    sy: int,
    side: int,
    xs,
    ys,
    ws,
    hs,
    thr_num: int,
    thr_den: int,
    skip: int,
) -> list:
    """Indices j != skip with IoA(S, box_j) >= thr_num/thr_den.

    The threshold compare is done by integer cross-multiplication so an
    IoA of exactly the threshold qualifies with no float round-off.
    """
    out = []
    for j in range(len(xs)):
        if j == skip:
            continue
        inter, area = ioa_parts(sx, sy, side, xs[j], ys[j], ws[j], hs[j])
        if inter * thr_den >= area * thr_num:
            out.append(j)
    return out


def grid_cell(x0: int, y0: int, side: int, canvas: int = 224) -> int:
    """Row-major 3x3 cell index of the square's center; edge 224 clamps."""
    col = (3 * (2 * x0 + side)) // (2 * canvas)
    row = (3 * (2 * y0 + side)) // (2 * canvas)
    if col > 2:
        col = 2
    if row > 2:
        row = 2
    return row * 3 + col
