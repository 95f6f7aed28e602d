# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grid-traversal raycaster (Amanatides-Woo DDA).

Inputs are in the grid frame: the cell (cx, cy) covers the square
[cx*res, (cx+1)*res) x [cy*res, (cy+1)*res) and occ is indexed occ[cy, cx].
Cells outside the array are treated as free.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, floor

cnp.import_array()

DEF HUGE = 1e300


def cast_rays(const cnp.uint8_t[:, ::1] occ, double ox, double oy,
              const double[::1] angles, double max_range, double resolution):
    """Range along each ray to the entering face of the first occupied cell.

    Returns max_range for rays that hit nothing, 0.0 when the start cell is
    already occupied.
    """
    cdef Py_ssize_t n = angles.shape[0]
    cdef cnp.ndarray out = np.empty(n, dtype=np.float64)
    cdef double[::1] rv = out
    cdef Py_ssize_t ny = occ.shape[0]
    cdef Py_ssize_t nx = occ.shape[1]
    cdef Py_ssize_t i
    cdef double res = resolution
    cdef double dx, dy, tmaxx, tmaxy, tdx, tdy, tcross
    cdef long cx0 = <long>floor(ox / res)
    cdef long cy0 = <long>floor(oy / res)
    cdef long cx, cy, sx, sy
    cdef bint start_occ = (0 <= cx0 < nx and 0 <= cy0 < ny
                           and occ[cy0, cx0] != 0)

    for i in range(n):
        if start_occ:
            rv[i] = 0.0
            continue
        dx = cos(angles[i])
        dy = sin(angles[i])
        cx = cx0
        cy = cy0
        if dx > 0:
            sx = 1
            tdx = res / dx
            tmaxx = ((cx + 1) * res - ox) / dx
        elif dx < 0:
            sx = -1
            tdx = -res / dx
            tmaxx = (cx * res - ox) / dx
        else:
            sx = 0
            tdx = HUGE
            tmaxx = HUGE
        if dy > 0:
            sy = 1
            tdy = res / dy
            tmaxy = ((cy + 1) * res - oy) / dy
        elif dy < 0:
            sy = -1
            tdy = -res / dy
            tmaxy = (cy * res - oy) / dy
        else:
            sy = 0
            tdy = HUGE
            tmaxy = HUGE

        rv[i] = max_range
        while True:
            if tmaxx <= tmaxy:
                tcross = tmaxx
                if tcross > max_range:
                    break
                cx += sx
                tmaxx += tdx
            else:
                tcross = tmaxy
                if tcross > max_range:
                    break
                cy += sy
                tmaxy += tdy
            if 0 <= cx < nx and 0 <= cy < ny and occ[cy, cx] != 0:
                rv[i] = tcross
                break
    return out
