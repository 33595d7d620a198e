"""Compare the compiled and numpy convolution kernels.

Usage: python benchmarks/bench_conv.py [--repeat N]

Times forward and backward passes on a few layer shapes taken from the
default network, then one full training step per variant with each backend.
"""
import argparse
import time

import numpy as np

from salseg.net import make_config, init_params, ops
from salseg.net.train import loss_and_grads

SHAPES = [
    # (name, x shape, w shape, stride, dilation, pad)
    ("stem 3->16 s2", (1, 3, 64, 64), (16, 3, 3, 3), 2, 1, 1),
    ("mid 16->16 s2", (1, 16, 32, 32), (16, 16, 3, 3), 2, 1, 1),
    ("dilated 16->16", (1, 16, 8, 8), (16, 16, 3, 3), 1, 2, 2),
    ("branch 16->16", (4, 16, 8, 8), (16, 16, 3, 3), 1, 1, 1),
    ("head 1x1 16->21", (4, 16, 8, 8), (21, 16, 1, 1), 1, 1, 0),
]


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    names = sorted(ops.KERNELS)
    print(f"{'layer':<18}" + "".join(f"{n + ' fwd':>14}{n + ' bwd':>14}" for n in names))
    for label, xs, ws, stride, dil, pad in SHAPES:
        x, w, b = rng.normal(size=xs), rng.normal(size=ws), rng.normal(size=ws[0])
        dout = rng.normal(size=ops.KERNELS[names[0]].conv2d_forward(x, w, b, stride, dil, pad).shape)
        row = f"{label:<18}"
        for n in names:
            k = ops.KERNELS[n]
            f = best_of(lambda: k.conv2d_forward(x, w, b, stride, dil, pad), repeat)
            g = best_of(lambda: k.conv2d_backward(dout, x, w, stride, dil, pad), repeat)
            row += f"{f * 1e3:>11.3f} ms{g * 1e3:>11.3f} ms"
        print(row)


def bench_train_step(repeat):
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 3, 32, 32))
    sem = rng.integers(0, 4, (32, 32))
    sal = rng.integers(0, 2, (32, 32))
    active = ops.BACKEND
    print(f"\n{'train step':<18}" + "".join(f"{n:>14}" for n in sorted(ops.KERNELS)))
    try:
        for v in ("v0", "v1", "v2", "v3", "v4"):
            cfg = make_config(v, num_sem_classes=4)
            params = init_params(cfg, 0)
            row = f"{v:<18}"
            for n in sorted(ops.KERNELS):
                ops.use_backend(n)
                t = best_of(lambda: loss_and_grads(cfg, params, x, sem, sal), repeat)
                row += f"{t * 1e3:>11.3f} ms"
            print(row)
    finally:
        ops.use_backend(active)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    print(f"available backends: {', '.join(sorted(ops.KERNELS))} (active: {ops.BACKEND})\n")
    bench_kernels(args.repeat)
    bench_train_step(args.repeat)


if __name__ == "__main__":
    main()
