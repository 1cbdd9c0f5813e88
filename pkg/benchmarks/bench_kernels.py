"""Benchmark the compiled kernels against the pure-numpy fallback.

Both flavours of every kernel are imported directly, so the script runs
the comparison in a single process regardless of LIDARMAPS_NO_NUMBA.
Each pair is warmed up once (triggering JIT compilation), checked for
identical output, then timed best-of-N with perf_counter.

Usage:
    python3 benchmarks/bench_kernels.py [--size N] [--points N] [--repeats N]
"""

import argparse
import math
import time

import numpy as np

from lidarmaps import _kernels as kernels
from lidarmaps._accel import HAS_NUMBA, using_numba


def _outputs_match(a: object, b: object) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(
            _outputs_match(x, y) for x, y in zip(a, b)
        )
    if isinstance(a, np.ndarray):
        return np.array_equal(a, np.asarray(b), equal_nan=a.dtype.kind == "f")
    return a == b


def _best_of(fn, args: tuple, repeats: int) -> float:
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(size: int, n_points: int, rng: np.random.Generator) -> list:
    h = w = size

    xs = rng.uniform(-5.0, size + 5.0, n_points)
    ys = rng.uniform(-5.0, size + 5.0, n_points)
    zs = rng.uniform(0.0, 80.0, n_points)

    surface = rng.uniform(0.0, 50.0, (h, w))
    valid = rng.random((h, w)) > 0.10
    valid[h // 3:h // 3 + 40, w // 3:w // 3 + 40] = False
    valid[0, 0] = True
    voids = surface.copy()
    voids[~valid] = np.nan

    blobs = rng.random((h, w)) > 0.55
    speckle = rng.random((h, w)) > 0.45

    steps = np.round(surface / 4.0).astype(np.int64)

    return [
        (
            "rasterize_min",
            f"{n_points / 1e6:.1f}M pts -> {w}x{h}",
            kernels.rasterize_min_numba,
            kernels.rasterize_min_numpy,
            (xs, ys, zs, 0.0, 0.0, 1.0, 0, 0, w, h),
        ),
        (
            "nearest_fill",
            f"{w}x{h}, {100 - int(round(100 * valid.mean()))}% void",
            kernels.nearest_fill_numba,
            kernels.nearest_fill_numpy,
            (voids, valid),
        ),
        (
            "erode_square",
            f"{w}x{h}, k=7",
            kernels.erode_square_numba,
            kernels.erode_square_numpy,
            (blobs, 3),
        ),
        (
            "dilate_square",
            f"{w}x{h}, k=7",
            kernels.dilate_square_numba,
            kernels.dilate_square_numpy,
            (blobs, 3),
        ),
        (
            "erode_diamond",
            f"{w}x{h}, k=7",
            kernels.erode_diamond_numba,
            kernels.erode_diamond_numpy,
            (blobs, 3),
        ),
        (
            "dilate_diamond",
            f"{w}x{h}, k=7",
            kernels.dilate_diamond_numba,
            kernels.dilate_diamond_numpy,
            (blobs, 3),
        ),
        (
            "label_components",
            f"{w}x{h}, 8-conn",
            kernels.label_components_numba,
            kernels.label_components_numpy,
            (speckle, True),
        ),
        (
            "distinct_count",
            f"{w}x{h}, k=5",
            kernels.distinct_count_numba,
            kernels.distinct_count_numpy,
            (steps, 5),
        ),
        (
            "masked_median",
            f"{w}x{h}, k=5, {int(round(100 * blobs.mean()))}% mask",
            kernels.masked_median_numba,
            kernels.masked_median_numpy,
            (surface, blobs, 5),
        ),
    ]


def main() -> int:
    parser = argparse.ArgumentParser(
        description="compare compiled and pure-numpy kernel timings"
    )
    parser.add_argument("--size", type=int, default=768, help="grid side in cells")
    parser.add_argument(
        "--points", type=int, default=1_500_000, help="points for rasterization"
    )
    parser.add_argument(
        "--repeats", type=int, default=3, help="timing repeats (best is kept)"
    )
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    path = "compiled (numba)" if using_numba() else "pure numpy"
    print(f"package kernel path at import: {path}")
    if not HAS_NUMBA:
        print("numba is not installed; timing the numpy fallback only")
    print()

    rng = np.random.default_rng(args.seed)
    rows = []
    for name, desc, fn_nb, fn_np, call_args in _cases(
        args.size, args.points, rng
    ):
        ref = fn_np(*call_args)
        if fn_nb is not None:
            got = fn_nb(*call_args)  # first call also compiles
            if not _outputs_match(ref, got):
                raise SystemExit(f"{name}: compiled and numpy outputs differ")
        t_np = _best_of(fn_np, call_args, args.repeats)
        t_nb = (
            _best_of(fn_nb, call_args, args.repeats)
            if fn_nb is not None
            else None
        )
        rows.append((name, desc, t_np, t_nb))

    header = f"{'kernel':<18} {'input':<26} {'numpy':>10} {'numba':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name, desc, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{name:<18} {desc:<26} {t_np:>9.4f}s {'n/a':>10} {'n/a':>8}")
        else:
            print(
                f"{name:<18} {desc:<26} {t_np:>9.4f}s {t_nb:>9.4f}s "
                f"{t_np / t_nb:>7.1f}x"
            )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
