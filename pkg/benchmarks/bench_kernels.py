"""Compare the compiled and NumPy kernel lanes on the pipeline's hot paths.

Usage:
    python3 benchmarks/bench_kernels.py [--repeats N] [--size PX]

Each kernel runs on identical inputs in both lanes; the table reports the
median wall time and the speedup of the compiled lane. Outputs are also
cross-checked for bit identity, so this doubles as a parity smoke test.
"""

import argparse
import statistics
import time

import numpy as np

from fpe.kernels import _numpy as numpy_lane
from fpe.kernels import gaussian_weights, has_native

try:
    from fpe.kernels import _native as native_lane
except ImportError:
    native_lane = None


def timed(fn, repeats):
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn()
        samples.append(time.perf_counter() - start)
    return statistics.median(samples), result


def bench_case(name, numpy_fn, native_fn, repeats, check=np.array_equal):
    numpy_time, numpy_out = timed(numpy_fn, repeats)
    if native_fn is None:
        print(f"{name:<28} numpy {numpy_time * 1e3:8.2f} ms   "
              f"native       n/a")
        return
    native_time, native_out = timed(native_fn, repeats)
    match = check(np.asarray(numpy_out), np.asarray(native_out))
    print(f"{name:<28} numpy {numpy_time * 1e3:8.2f} ms   "
          f"native {native_time * 1e3:8.2f} ms   "
          f"x{numpy_time / native_time:5.1f}   "
          f"{'bit-identical' if match else 'MISMATCH'}")
    if not match:
        raise SystemExit(f"{name}: backends disagree")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--size", type=int, default=512,
                        help="square working resolution")
    args = parser.parse_args()

    if not has_native():
        print("compiled backend unavailable; timing the NumPy lane only\n")

    rng = np.random.default_rng(7)
    px = args.size
    channel = rng.random((px, px))
    weights = gaussian_weights(px / 90.0)
    pixels = rng.integers(0, 256, size=(px * 2, int(px * 1.5), 3), dtype=np.uint8)
    mask = np.ascontiguousarray(
        (rng.random((px, px)) < 0.6).astype(np.uint8))

    print(f"size {px}px, median of {args.repeats} runs\n")
    bench_case(
        f"gaussian_blur {px}x{px}",
        lambda: numpy_lane.gaussian_blur(channel, weights),
        (lambda: native_lane.gaussian_blur(channel, weights)) if native_lane else None,
        args.repeats)
    bench_case(
        f"resize {px * 2}x{int(px * 1.5)} -> {px}",
        lambda: numpy_lane.resize_bilinear(pixels, px, px),
        (lambda: native_lane.resize_bilinear(pixels, px, px)) if native_lane else None,
        args.repeats)
    bench_case(
        f"fill_holes {px}x{px}",
        lambda: numpy_lane.fill_holes(mask),
        (lambda: native_lane.fill_holes(mask)) if native_lane else None,
        args.repeats,
        check=lambda a, b: np.array_equal(a.astype(bool), b.astype(bool)))


if __name__ == "__main__":
    main()
