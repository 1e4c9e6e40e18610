"""Time the numba and numpy kernel backends on network-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--batch 32]

Prints one row per (kernel, shape) with the best time for each backend
and the max absolute difference between their outputs.
"""

import argparse
import time

import numpy as np

from liveness import kernels


def best_time(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases(batch, rng):
    for h, cin, cout in ((64, 3, 16), (64, 16, 16), (32, 16, 32), (32, 32, 32)):
        x = rng.standard_normal((batch, h, h, cin))
        k = rng.standard_normal((3, 3, cin, cout))
        b = rng.standard_normal(cout)
        dout = rng.standard_normal((batch, h, h, cout))
        tag = f"{batch}x{h}x{h}x{cin}->{cout}"
        yield "conv forward", tag, lambda: kernels.conv3x3_same(x, k, b)
        yield "conv param grad", tag, lambda: kernels.conv3x3_same_grad_params(x, dout)
        yield "conv input grad", tag, lambda: kernels.conv3x3_same_grad_input(dout, k)
    x = rng.standard_normal((batch, 64, 64, 16))
    yield "maxpool forward", f"{batch}x64x64x16", lambda: kernels.maxpool2x2(x)
    a, w = rng.standard_normal((batch, 8192)), rng.standard_normal((8192, 128))
    yield "matmul", f"{batch}x8192 @ 8192x128", lambda: kernels.matmul(a, w)


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--batch", type=int, default=32)
    args = parser.parse_args()

    backends = kernels.available_backends()
    header = f"{'kernel':<18}{'shape':<26}" + "".join(f"{b + ' (ms)':>14}" for b in backends)
    print(header + f"{'max |diff|':>14}")
    rng = np.random.default_rng(0)
    for name, tag, fn in cases(args.batch, rng):
        timings, outputs = [], []
        for b in backends:
            with kernels.use_backend(b):
                timings.append(best_time(fn, args.repeat) * 1e3)
                outputs.append(_first(fn()))
        diff = max(float(np.max(np.abs(o - outputs[0]))) for o in outputs)
        print(f"{name:<18}{tag:<26}" + "".join(f"{t:>14.2f}" for t in timings) + f"{diff:>14.2e}")


if __name__ == "__main__":
    main()
