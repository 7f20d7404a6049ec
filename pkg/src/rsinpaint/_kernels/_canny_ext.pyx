# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled canny kernels: non-maximum suppression and hysteresis."""

import numpy as np

# tan(22.5 deg); shared with the numpy fallback so both quantize identically
cdef double TAN22 = 0.41421356237309503


def non_max_suppression(const double[:, ::1] mag, const double[:, ::1] gx,
                        const double[:, ::1] gy, double tol):
    cdef Py_ssize_t h = mag.shape[0], w = mag.shape[1]
    cdef Py_ssize_t y, x
    cdef int dx, dy
    cdef double ax, ay, m, prev, nxt
    out = np.zeros((h, w), dtype=np.float64)
    cdef double[:, ::1] o = out
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            m = mag[y, x]
            if m <= 0.0:
                continue
            ax = gx[y, x] if gx[y, x] >= 0 else -gx[y, x]
            ay = gy[y, x] if gy[y, x] >= 0 else -gy[y, x]
            if ay <= TAN22 * ax:
                dx = 1
                dy = 0
            elif ax <= TAN22 * ay:
                dx = 0
                dy = 1
            elif gx[y, x] * gy[y, x] > 0:
                dx = 1
                dy = 1
            else:
                dx = 1
                dy = -1
            prev = mag[y - dy, x - dx]
            nxt = mag[y + dy, x + dx]
            if m > prev - tol and m > nxt + tol:
                o[y, x] = m
    return out


def hysteresis(const double[:, ::1] nms, double low, double high):
    cdef Py_ssize_t h = nms.shape[0], w = nms.shape[1]
    cdef Py_ssize_t y, x, ny, nx, top, k
    cdef Py_ssize_t[8] oy = [-1, -1, -1, 0, 0, 1, 1, 1]
    cdef Py_ssize_t[8] ox = [-1, 0, 1, -1, 1, -1, 0, 1]
    out = np.zeros((h, w), dtype=np.uint8)
    cdef unsigned char[:, ::1] o = out
    stack = np.empty(h * w, dtype=np.intp)
    cdef Py_ssize_t[::1] st = stack
    top = 0
    for y in range(h):
        for x in range(w):
            if nms[y, x] >= high and o[y, x] == 0:
                o[y, x] = 1
                st[top] = y * w + x
                top += 1
                while top > 0:
                    top -= 1
                    ny = st[top] // w
                    nx = st[top] % w
                    for k in range(8):
                        if 0 <= ny + oy[k] < h and 0 <= nx + ox[k] < w:
                            if o[ny + oy[k], nx + ox[k]] == 0 and nms[ny + oy[k], nx + ox[k]] >= low:
                                o[ny + oy[k], nx + ox[k]] = 1
                                st[top] = (ny + oy[k]) * w + nx + ox[k]
                                top += 1
    return out
