"""Timing comparison of the compiled and numpy convolution kernels.

Run directly:

    python benchmarks/benchmark_kernels.py [--repeats N]

Prints per-configuration forward/backward timings for both backends and
the speedup of the compiled extension. Requires the extension to be
built; otherwise only the numpy numbers are shown.
"""

import argparse
import time

import numpy as np

from tcnkit.kernels import pyref

try:
    from tcnkit.kernels import _conv
except ImportError:
    _conv = None

CASES = [
    # t, cin, cout, k, dilation
    (128, 24, 64, 3, 1),
    (128, 64, 64, 3, 4),
    (512, 64, 64, 3, 8),
    (2048, 64, 64, 3, 16),
    (2048, 128, 128, 5, 8),
]


def _time(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(repeats):
    rng = np.random.default_rng(0)
    header = (
        f"{'case':>24} {'dtype':>8} {'pass':>8} {'numpy':>10} "
        f"{'compiled':>10} {'speedup':>8}"
    )
    print(header)
    print("-" * len(header))
    for t, cin, cout, k, d in CASES:
        for dtype in (np.float32, np.float64):
            x = rng.normal(size=(t, cin)).astype(dtype)
            w = rng.normal(size=(cout, cin, k)).astype(dtype)
            b = rng.normal(size=cout).astype(dtype)
            up = rng.normal(size=(t, cout)).astype(dtype)
            case = f"T={t} {cin}->{cout} k={k} d={d}"
            for label, ref_fn, fast_fn in (
                (
                    "forward",
                    lambda: pyref.conv_forward(x, w, b, d),
                    (lambda: _conv.conv_forward(x, w, b, d)) if _conv else None,
                ),
                (
                    "backward",
                    lambda: pyref.conv_backward(x, w, up, d),
                    (lambda: _conv.conv_backward(x, w, up, d)) if _conv else None,
                ),
            ):
                ref_time = _time(ref_fn, repeats)
                if fast_fn is None:
                    print(f"{case:>24} {np.dtype(dtype).name:>8} {label:>8} "
                          f"{ref_time * 1e3:9.3f}ms {'n/a':>10} {'n/a':>8}")
                    continue
                fast_time = _time(fast_fn, repeats)
                print(f"{case:>24} {np.dtype(dtype).name:>8} {label:>8} "
                      f"{ref_time * 1e3:9.3f}ms {fast_time * 1e3:9.3f}ms "
                      f"{ref_time / fast_time:7.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing repetitions per case (best is kept)")
    args = parser.parse_args()
    run(args.repeats)


if __name__ == "__main__":
    main()
