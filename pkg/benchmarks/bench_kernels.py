#!/usr/bin/env python3
"""Compare the conv kernel backends (numpy im2col+BLAS vs compiled Cython
loops) on this model's hot shapes, plus end-to-end inference.

Usage: python benchmarks/bench_kernels.py [--runs 20]
"""
import argparse
import time

import numpy as np

from waveclean import kernels
from waveclean.generator import Generator, GeneratorConfig
from waveclean.tensor import Tensor, no_grad

SHAPES = [
    # name,            x shape,          w shape,        stride, dilation
    ("enc0 lite",      (1, 1, 16128),    (64, 1, 4),     2, 1),
    ("enc2 lite",      (1, 128, 4032),   (128, 128, 4),  2, 1),
    ("res2 lite",      (1, 32, 2016),    (32, 32, 3),    1, 2),
    ("mix lite",       (1, 128, 2016),   (256, 128, 1),  1, 1),
    ("enc1 tiny b4",   (4, 8, 1024),     (16, 8, 4),     2, 1),
    ("disc blk4 b12",  (12, 64, 256),    (128, 64, 15),  2, 1),
]


def time_call(fn, runs):
    fn()  # warmup
    start = time.perf_counter()
    for _ in range(runs):
        fn()
    return (time.perf_counter() - start) / runs * 1e3


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--runs", type=int, default=20)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    backends = kernels.available_backends()
    print(f"backends: {backends}")

    print(f"\n{'shape':14s} " + "".join(f"| {b}: fwd / bwd (ms) " for b in backends))
    for name, xs, ws, stride, dil in SHAPES:
        x = rng.normal(size=xs).astype(np.float32)
        w = rng.normal(size=ws).astype(np.float32)
        bias = rng.normal(size=ws[0]).astype(np.float32)
        pad = (ws[2] - 1) * dil
        row = f"{name:14s} "
        for be in backends:
            kernels.use_backend(be)
            y = kernels.conv1d_fwd(x, w, bias, stride, dil, pad)
            gy = np.ones_like(y)
            fwd = time_call(lambda: kernels.conv1d_fwd(x, w, bias, stride, dil, pad),
                            args.runs)
            bwd = time_call(lambda: kernels.conv1d_bwd(x, w, stride, dil, pad, gy),
                            args.runs)
            row += f"| {fwd:7.2f} / {bwd:7.2f}   "
        print(row)

    print("\nend-to-end: enhancer forward, 1 s of 16 kHz audio")
    gen = Generator(GeneratorConfig(), seed=0)
    x = Tensor(rng.uniform(-0.5, 0.5, (1, 1, 16000)).astype(np.float32))
    for be in backends:
        kernels.use_backend(be)
        with no_grad():
            ms = time_call(lambda: gen.forward(x), max(3, args.runs // 4))
        print(f"  {be:7s}: {ms:7.1f} ms  (rtf {ms / 1e3:.3f})")

    print("\nstreaming: 256-sample chunks")
    for be in backends:
        kernels.use_backend(be)
        stream = gen.stream()
        chunk = rng.uniform(-0.5, 0.5, 256).astype(np.float32)
        ms = time_call(lambda: stream.process(chunk), args.runs)
        print(f"  {be:7s}: {ms:7.2f} ms/chunk (rtf {ms / 16:.3f})")
    kernels.use_backend("numpy")


if __name__ == "__main__":
    main()
