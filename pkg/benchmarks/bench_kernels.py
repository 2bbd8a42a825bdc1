"""Compare the compiled and numpy update kernels.

Usage: python3 benchmarks/bench_kernels.py [--shape 80 150 16] [--steps 50]
"""

import argparse
import time

import numpy as np

from fdtdsens import _kernels_py

try:
    from fdtdsens import _kernels
except ImportError:
    _kernels = None


def _fields(shape, rng):
    nx, ny, nz = shape
    e = [rng.standard_normal((nx + 1, ny + 1, nz + 1)) for _ in range(3)]
    h = [rng.standard_normal(shape) for _ in range(3)]
    ce = [np.full((nx + 1, ny + 1, nz + 1), 0.3) for _ in range(6)]
    ch = [np.full(shape, 0.3) for _ in range(6)]
    return e, h, ce, ch


def time_3d(mod, shape, steps, rng):
    e, h, ce, ch = _fields(shape, rng)
    t = time.perf_counter()
    for _ in range(steps):
        mod.update_h_3d(*e, *h, *ch)
        mod.update_e_3d(*e, *h, *ce)
    return (time.perf_counter() - t) / steps, e, h


def time_1d(mod, n, steps, rng):
    e, h = rng.standard_normal(n), rng.standard_normal(n)
    c = np.full(n, 0.5)
    t = time.perf_counter()
    for _ in range(steps):
        mod.update_h_1d(e, h, c)
        mod.update_e_1d(e, h, c)
    return (time.perf_counter() - t) / steps, e, h


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--shape", type=int, nargs=3, default=(80, 150, 16))
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--cells-1d", type=int, default=1030)
    args = ap.parse_args(argv)
    shape = tuple(args.shape)
    mods = [("numpy", _kernels_py)] + ([("compiled", _kernels)] if _kernels is not None else [])
    results = {}
    for name, mod in mods:
        t3, e3, _ = time_3d(mod, shape, args.steps, np.random.default_rng(0))
        t1, e1, _ = time_1d(mod, args.cells_1d, args.steps * 100, np.random.default_rng(0))
        results[name] = (t3, t1, e3, e1)
        cells = np.prod(shape)
        print(f"{name:9s} 3-D {shape}: {t3 * 1e3:8.2f} ms/step ({cells / t3 / 1e6:7.1f} Mcell/s)"
              f"   1-D {args.cells_1d}: {t1 * 1e6:7.2f} us/step")
    if len(results) == 2:
        a, b = results["numpy"], results["compiled"]
        diff = max(np.max(np.abs(x - y)) for x, y in zip(a[2], b[2]))
        print(f"speedup 3-D {a[0] / b[0]:.2f}x, 1-D {a[1] / b[1]:.2f}x; max |diff| after run {diff:.2e}")
    else:
        print("compiled extension not built; numpy only")


if __name__ == "__main__":
    main()
