"""Time the compiled kernels against the numpy fallback.

Runs the same workloads through both backends and prints a table of median
wall times plus the speedup.  Workloads mirror the hot loops: convolution
forward/backward at a mid-network extent, the two pooling ops, and packed
Hamming scans at the usual code widths.

    python3 benchmarks/bench_kernels.py [--repeats 7] [--quick]
"""

import argparse
import math
import time

import numpy as np

from hashlab._kernels import _fallback

try:
    from hashlab._kernels import _core
except ImportError:
    _core = None


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    times.sort()
    return times[len(times) // 2]


def conv_workload(rng, n, c, h, f, k, stride):
    pad = k // 2
    xp = rng.standard_normal((n, c, h + 2 * pad, h + 2 * pad))
    w = rng.standard_normal((f, c, k, k))
    b = rng.standard_normal(f)
    oh = (h + 2 * pad - k) // stride + 1
    gy = rng.standard_normal((n, f, oh, oh))
    return xp, w, b, gy, stride


def pool_workload(rng, n, c, h, k, stride):
    x = rng.standard_normal((n, c, h, h))
    oh = math.ceil((h - k) / stride) + 1
    gy = rng.standard_normal((n, c, oh, oh))
    return x, gy, k, stride, oh


def hamming_workload(rng, q, count):
    words = (q + 63) // 64
    db = rng.integers(0, 2**64, size=(count, words), dtype=np.uint64)
    mask = np.uint64((1 << (q - 64 * (words - 1))) - 1) if q % 64 else np.uint64(2**64 - 1)
    db[:, -1] &= mask
    return db[0].copy(), db


def run(args):
    rng = np.random.default_rng(0)
    scale = 0.25 if args.quick else 1.0
    n = max(1, int(8 * scale))

    rows = []

    xp, w, b, gy, stride = conv_workload(rng, n, 96, int(56 * scale) or 14, 64, 5, 1)
    rows.append(("conv2d forward", lambda be: be.conv2d_forward(xp, w, b, stride)))
    rows.append(("conv2d backward", lambda be: be.conv2d_backward(xp, w, gy, stride)))

    x, pgy, k, pstride, oh = pool_workload(rng, n, 96, int(56 * scale) or 14, 3, 2)
    rows.append(("maxpool forward", lambda be: be.maxpool_forward(x, k, pstride, 0, oh, oh)))
    rows.append(("avgpool forward", lambda be: be.avgpool_forward(x, k, pstride, 0, oh, oh)))

    q, db = hamming_workload(rng, 48, int(200_000 * scale) or 10_000)
    rows.append(("hamming scan q=48", lambda be: be.hamming_distances(q, db)))
    q12, db12 = hamming_workload(rng, 12, int(200_000 * scale) or 10_000)
    rows.append(("hamming scan q=12", lambda be: be.hamming_distances(q12, db12)))

    print(f"{'workload':<20} {'fallback':>12} {'compiled':>12} {'speedup':>9}")
    for name, fn in rows:
        t_fb = median_time(lambda: fn(_fallback), args.repeats)
        if _core is not None:
            t_c = median_time(lambda: fn(_core), args.repeats)
            print(f"{name:<20} {t_fb * 1e3:>10.2f}ms {t_c * 1e3:>10.2f}ms {t_fb / t_c:>8.1f}x")
        else:
            print(f"{name:<20} {t_fb * 1e3:>10.2f}ms {'n/a':>12} {'n/a':>9}")
    if _core is None:
        print("\ncompiled extension not built; only the fallback was timed")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--quick", action="store_true", help="smaller workloads")
    args = ap.parse_args()
    run(args)


if __name__ == "__main__":
    main()
