"""Benchmark the numba kernels against the pure NumPy fallback.

Runs the four hot kernels on realistic workloads (an intersection-sized
raster and matching-sized distance queries), verifies both backends agree,
and prints a timing table.

    python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from traj_atlas.kernels import numpy_backend

try:
    from traj_atlas.kernels import numba_backend
except ImportError:
    numba_backend = None


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def make_workloads(seed=0):
    rng = np.random.default_rng(seed)
    h, w = 480, 480

    px, py, offsets = [], [], [0]
    for _ in range(400):
        n = int(rng.integers(40, 120))
        x = np.clip(np.cumsum(rng.integers(-3, 4, n)) + rng.integers(0, w), 0, w - 1)
        y = np.clip(np.cumsum(rng.integers(-3, 4, n)) + rng.integers(0, h), 0, h - 1)
        px.extend(x)
        py.extend(y)
        offsets.append(len(px))
    raster_args = (
        h,
        w,
        np.asarray(px, dtype=np.int64),
        np.asarray(py, dtype=np.int64),
        np.asarray(offsets, dtype=np.int64),
    )

    gray = rng.integers(0, 30, size=(h, w)).astype(np.float64)
    binary = (numpy_backend.erode(gray, 1) >= 4).astype(np.uint8)

    qx, qy = rng.normal(0, 60, 4000), rng.normal(0, 60, 4000)
    ax, ay = rng.normal(0, 60, 400), rng.normal(0, 60, 400)
    bx, by = ax + rng.normal(0, 8, 400), ay + rng.normal(0, 8, 400)

    return {
        "rasterize": (lambda b: lambda: b.rasterize(*raster_args)),
        "erode r=2": (lambda b: lambda: b.erode(gray, 2)),
        "dilate r=2": (lambda b: lambda: b.dilate(gray, 2)),
        "thin": (lambda b: lambda: b.thin(binary)),
        "segments_dist": (lambda b: lambda: b.segments_dist_sq(qx, qy, ax, ay, bx, by)),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    workloads = make_workloads()
    if numba_backend is None:
        print("numba not installed; timing the NumPy backend only")
    else:
        print("warming up the numba JIT (unmeasured)...")
        for make in workloads.values():
            make(numba_backend)()

    print(f"\n{'kernel':15s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>9s}  identical")
    for name, make in workloads.items():
        t_np, ref = timeit(make(numpy_backend), args.repeats)
        if numba_backend is None:
            print(f"{name:15s} {1e3 * t_np:12.1f} {'-':>12s} {'-':>9s}")
            continue
        t_nb, out = timeit(make(numba_backend), args.repeats)
        same = np.array_equal(np.asarray(ref), np.asarray(out))
        print(
            f"{name:15s} {1e3 * t_np:12.1f} {1e3 * t_nb:12.1f} {t_np / t_nb:8.1f}x  {same}"
        )


if __name__ == "__main__":
    main()
