"""Pure numpy/scipy versions of the canny kernels.

Bit-identical to the compiled extension: same direction quantization, same
comparisons on the same float64 inputs.
"""

import numpy as np
from scipy import ndimage

TAN22 = 0.41421356237309503


def non_max_suppression(mag, gx, gy, tol):
    h, w = mag.shape
    out = np.zeros((h, w), dtype=np.float64)
    if h < 3 or w < 3:
        return out
    ax = np.abs(gx)
    ay = np.abs(gy)
    horiz = ay <= TAN22 * ax
    vert = ~horiz & (ax <= TAN22 * ay)
    diag = ~horiz & ~vert & (gx * gy > 0)
    anti = ~horiz & ~vert & ~diag

    # (dy, dx) per direction class
    dy = np.where(horiz, 0, np.where(anti, -1, 1))
    dx = np.where(vert, 0, 1)

    ys, xs = np.mgrid[1:h - 1, 1:w - 1]
    dyi = dy[1:-1, 1:-1]
    dxi = dx[1:-1, 1:-1]
    m = mag[1:-1, 1:-1]
    prev = mag[ys - dyi, xs - dxi]
    nxt = mag[ys + dyi, xs + dxi]
    keep = (m > 0) & (m > prev - tol) & (m > nxt + tol)
    out[1:-1, 1:-1] = np.where(keep, m, 0.0)
    return out


def hysteresis(nms, low, high):
    weak = nms >= low
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return np.zeros(nms.shape, dtype=np.uint8)
    strong_labels = np.unique(labels[(nms >= high) & weak])
    keep = np.zeros(n + 1, dtype=bool)
    keep[strong_labels] = True
    keep[0] = False
    return keep[labels].astype(np.uint8)
