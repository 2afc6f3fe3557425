#!/usr/bin/env python3
"""Benchmark the numba kernel backend against the pure-numpy fallback, plus
single-sample model throughput (the real-time figures depend entirely on the
host, so treat them as reports, not contracts).

Usage: python benchmarks/bench_kernels.py [--repeats N]
"""

import argparse
import time

import numpy as np

from apbface.kernels import numba_impl, numpy_impl, conv_out_size


def time_fn(fn, repeats, warmup=2):
    for _ in range(warmup):
        fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernels(repeats):
    cases = [
        ("conv1 64x64x1 k4s2", (16, 1, 64, 64), (4, 4, 2, 2, 1, 1)),
        ("conv2 32x32x16 k4s2", (16, 16, 32, 32), (4, 4, 2, 2, 1, 1)),
        ("conv3 16x16x32 k4s2", (16, 32, 16, 16), (4, 4, 2, 2, 1, 1)),
        ("audio 16x20x1 k3s2", (32, 1, 16, 20), (3, 3, 2, 2, 1, 1)),
    ]
    print(f"{'case':26s} {'im2col numba':>14s} {'im2col numpy':>14s} {'col2im numba':>14s} "
          f"{'col2im numpy':>14s}")
    rng = np.random.default_rng(0)
    for name, shape, (kh, kw, sh, sw, ph, pw) in cases:
        x = rng.normal(size=shape).astype(np.float32)
        ho = conv_out_size(shape[2], kh, sh, ph)
        wo = conv_out_size(shape[3], kw, sw, pw)
        cols = rng.normal(size=(shape[0], shape[1] * kh * kw, ho * wo)).astype(np.float32)
        t_idx_nb = time_fn(lambda: numba_impl.im2col(x, kh, kw, sh, sw, ph, pw), repeats)
        t_idx_np = time_fn(lambda: numpy_impl.im2col(x, kh, kw, sh, sw, ph, pw), repeats)
        t_col_nb = time_fn(lambda: numba_impl.col2im(cols, shape, kh, kw, sh, sw, ph, pw), repeats)
        t_col_np = time_fn(lambda: numpy_impl.col2im(cols, shape, kh, kw, sh, sw, ph, pw), repeats)
        print(f"{name:26s} {t_idx_nb * 1e3:12.3f}ms {t_idx_np * 1e3:12.3f}ms "
              f"{t_col_nb * 1e3:12.3f}ms {t_col_np * 1e3:12.3f}ms")


def bench_models(repeats):
    from apbface.geometry import GeometryPredictor, PredictorArch
    from apbface.reenact import UNetArch, UNetGenerator

    predictor = GeometryPredictor(PredictorArch(), np.random.default_rng(0))
    mfcc = np.random.default_rng(1).normal(size=(1, 16, 20)).astype(np.float32)
    pose = np.zeros((1, 3), dtype=np.float32)
    blink = np.full((1, 2), 0.4, dtype=np.float32)
    t = time_fn(lambda: predictor.predict_batch(mfcc, pose, blink), repeats)
    print(f"\npredictor batch-1 inference: {t * 1e3:.2f} ms -> {1.0 / t:.0f} samples/s")

    gen = UNetGenerator(UNetArch(resolution=64), np.random.default_rng(2))
    lm = (np.random.default_rng(3).uniform(size=(1, 1, 64, 64)) > 0.9).astype(np.float32)
    t = time_fn(lambda: gen.forward(lm), repeats)
    print(f"reenactor 64px batch-1 inference: {t * 1e3:.2f} ms -> {1.0 / t:.0f} samples/s")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()
    bench_kernels(args.repeats)
    bench_models(args.repeats)
