#!/usr/bin/env python3
"""Benchmark the compiled kernel backend against the numpy fallback.

Times the backend-owned kernels (depthwise conv, 2x2 max pool, channel
1-D conv) on shapes representative of this network, then an end-to-end
forward pass under each backend.

Run:  python benchmarks/bench_backends.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from sctransnet import backend


def timeit(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng):
    x480 = rng.standard_normal((1, 480, 16, 16)).astype(np.float32)
    w480 = rng.standard_normal((480, 1, 3, 3)).astype(np.float32)
    x637 = rng.standard_normal((1, 340, 16, 16)).astype(np.float32)
    w637 = rng.standard_normal((340, 1, 5, 5)).astype(np.float32)
    pool_in = rng.standard_normal((1, 32, 256, 256)).astype(np.float32)
    seq = rng.standard_normal((16, 480)).astype(np.float32)
    k3 = rng.standard_normal(3).astype(np.float32)
    g480 = rng.standard_normal(x480.shape).astype(np.float32)
    return [
        ("depthwise 3x3, 480ch @16x16",
         lambda impl: impl.depthwise_conv2d(x480, w480, (1, 1), (1, 1))),
        ("depthwise 5x5, 340ch @16x16",
         lambda impl: impl.depthwise_conv2d(x637, w637, (1, 1), (2, 2))),
        ("depthwise grad-weight 480ch",
         lambda impl: impl.depthwise_conv2d_grad_weight(
             g480, x480, (3, 3), (1, 1), (1, 1))),
        ("maxpool 2x2, 32ch @256x256",
         lambda impl: impl.maxpool2x2(pool_in)),
        ("channel conv1d, 480ch x16",
         lambda impl: impl.conv1d_channel(seq, k3)),
    ]


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    names = backend.available_backends()
    impls = {name: backend.get_impl(name) for name in names}
    print(f"{'kernel':<34}" + "".join(f"{n:>14}" for n in names)
          + ("      speedup" if len(names) == 2 else ""))
    for label, fn in kernel_cases(rng):
        times = [timeit(lambda impl=impls[n]: fn(impl), repeats)
                 for n in names]
        row = f"{label:<34}" + "".join(f"{t * 1e3:>12.3f}ms" for t in times)
        if len(times) == 2 and times[1] > 0:
            row += f"{times[0] / times[1]:>12.1f}x"
        print(row)


def bench_forward(repeats):
    from sctransnet.config import ModelConfig
    from sctransnet.model.network import SCTransNet

    model = SCTransNet(ModelConfig(), seed=0)
    x = np.random.default_rng(1).random((1, 1, 256, 256), dtype=np.float32)
    print(f"\n{'full forward, 256x256':<34}", end="")
    for name in backend.available_backends():
        backend.use_backend(name)
        t = timeit(lambda: model.predict(x), max(1, repeats // 3))
        print(f"{t * 1e3:>12.1f}ms", end="")
    print()


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    print(f"available backends: {backend.available_backends()} "
          f"(active: {backend.active_backend()})\n")
    bench_kernels(args.repeats)
    bench_forward(args.repeats)


if __name__ == "__main__":
    main()
