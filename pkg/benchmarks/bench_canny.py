"""Time the compiled and pure-Python canny kernels on the same gradients.

    python3 benchmarks/bench_canny.py [--size 256] [--repeat 20]
"""

import argparse
import timeit

import numpy as np
from scipy import ndimage

from rsinpaint import _kernels


def gradients(size, seed=0):
    img = ndimage.gaussian_filter(np.random.default_rng(seed).uniform(size=(size, size)), 2.0)
    gx = np.ascontiguousarray(ndimage.sobel(img, axis=1, mode="nearest"))
    gy = np.ascontiguousarray(ndimage.sobel(img, axis=0, mode="nearest"))
    return np.ascontiguousarray(np.hypot(gx, gy)), gx, gy


def bench(backend, mag, gx, gy, repeat):
    tol = 1e-9 * float(mag.max())
    nms = np.asarray(backend.non_max_suppression(mag, gx, gy, tol))
    lo, hi = 0.1 * nms.max(), 0.2 * nms.max()
    t_nms = min(timeit.repeat(lambda: backend.non_max_suppression(mag, gx, gy, tol), number=1, repeat=repeat))
    t_hys = min(timeit.repeat(lambda: backend.hysteresis(nms, lo, hi), number=1, repeat=repeat))
    return t_nms, t_hys, nms, np.asarray(backend.hysteresis(nms, lo, hi))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    mag, gx, gy = gradients(args.size)
    backends = {"python": _kernels.python_backend}
    if _kernels.compiled_backend is not None:
        backends["cython"] = _kernels.compiled_backend
    results = {name: bench(b, mag, gx, gy, args.repeat) for name, b in backends.items()}
    print(f"{args.size}x{args.size}, best of {args.repeat}")
    print(f"{'backend':<8} {'nms ms':>9} {'hysteresis ms':>14}")
    for name, (t_nms, t_hys, _, _) in results.items():
        print(f"{name:<8} {1e3 * t_nms:9.3f} {1e3 * t_hys:14.3f}")
    if "cython" in results:
        py, cy = results["python"], results["cython"]
        same = np.array_equal(py[2], cy[2]) and np.array_equal(py[3], cy[3])
        print(f"speedup: nms x{py[0] / cy[0]:.1f}, hysteresis x{py[1] / cy[1]:.1f}; outputs identical: {same}")
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
