# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels; semantics identical to _geometry_py."""

IMPLEMENTATION = "cython"


cdef inline long _axis(long pos, long dim, long side, long canvas):
    cdef long lo = pos + dim - side
    cdef long hi = canvas - side
    cdef long cand
    if lo < 0:
        lo = 0
    if pos < hi:
        hi = pos
    # floor division of (2*ideal) keeps half-pixel ties on the smaller origin
    cand = (2 * pos + dim - side) >> 1
    if cand < lo:
        return lo
    if cand > hi:
        return hi
    return cand


def square_crop(long x, long y, long w, long h, long canvas=224):
    cdef long side = w if w >= h else h
    if side > canvas:
        raise ValueError(f"impossible crop: side {side} exceeds canvas {canvas}")
    return _axis(x, w, side, canvas), _axis(y, h, side, canvas), side


cdef inline long _inter(long sx, long sy, long side, long rx, long ry, long rw, long rh):
    cdef long ix = sx if sx >= rx else rx
    cdef long iy = sy if sy >= ry else ry
    cdef long ix2 = sx + side
    cdef long iy2 = sy + side
    cdef long iw, ih
    if rx + rw < ix2:
        ix2 = rx + rw
    if ry + rh < iy2:
        iy2 = ry + rh
    iw = ix2 - ix
    ih = iy2 - iy
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def ioa_parts(long sx, long sy, long side, long rx, long ry, long rw, long rh):
    return _inter(sx, sy, side, rx, ry, rw, rh), rw * rh


def qualifying_neighbors(long sx, long sy, long side, xs, ys, ws, hs,
                         long thr_num, long thr_den, long skip):
    cdef Py_ssize_t n = len(xs)
    cdef Py_ssize_t j
    cdef long inter, area
    out = []
    for j in range(n):
        if j == skip:
            continue
        inter = _inter(sx, sy, side, xs[j], ys[j], ws[j], hs[j])
        area = <long> ws[j] * <long> hs[j]
        if inter * thr_den >= area * thr_num:
            out.append(j)
    return out


def grid_cell(long x0, long y0, long side, long canvas=224):
    cdef long col = (3 * (2 * x0 + side)) // (2 * canvas)
    cdef long row = (3 * (2 * y0 + side)) // (2 * canvas)
    if col > 2:
        col = 2
    if row > 2:
        row = 2
    return row * 3 + col
