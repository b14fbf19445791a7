"""Compare the compiled kernels against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--rows R] [--cols C]

Times the four hot kernels (GELU forward/backward, row softmax, row
layernorm) on identical inputs with both implementations and prints the
median wall-clock per call plus the speedup. Also cross-checks that the two
implementations agree to float64 roundoff.
"""

import argparse
import time

import numpy as np

from mixcast._fast import HAVE_COMPILED, fallback

if HAVE_COMPILED:
    from mixcast._fast import _kernels as compiled
else:
    compiled = None


def median_time(fn, args, repeats):
    fn(*args)  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    times.sort()
    return times[len(times) // 2]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=20)
    parser.add_argument("--rows", type=int, default=4096)
    parser.add_argument("--cols", type=int, default=64)
    args = parser.parse_args()

    if not HAVE_COMPILED:
        print("compiled extension not available; nothing to compare "
              "(build it with `pip install -e . --no-build-isolation`)")
        return 1

    rng = np.random.default_rng(0)
    x = rng.normal(size=(args.rows, args.cols)) * 2.0
    dy = rng.normal(size=(args.rows, args.cols))

    cases = [
        ("gelu_fwd", (x,)),
        ("gelu_bwd", (x, dy)),
        ("softmax_rows", (x,)),
        ("layernorm_rows", (x, 1e-5)),
    ]

    print(f"input: {args.rows} x {args.cols} float64, median of {args.repeats} calls")
    print(f"{'kernel':<16} {'compiled':>12} {'fallback':>12} {'speedup':>9}")
    for name, call_args in cases:
        cf, ff = getattr(compiled, name), getattr(fallback, name)
        out_c, out_f = cf(*call_args), ff(*call_args)
        pairs = list(zip(out_c, out_f)) if isinstance(out_c, tuple) else [(out_c, out_f)]
        for a, b in pairs:
            assert np.allclose(a, b, atol=1e-12), f"{name}: implementations disagree"
        tc = median_time(cf, call_args, args.repeats)
        tf = median_time(ff, call_args, args.repeats)
        print(f"{name:<16} {tc * 1e3:>10.3f}ms {tf * 1e3:>10.3f}ms {tf / tc:>8.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
