"""Timing comparison of the numba kernels against the numpy fallbacks.

Run:  python3 benchmarks/bench_backends.py [--repeats 200]

Shapes mirror what training actually hits: attention score blocks of a
padded batch (rows = batch * query length) and flattened parameter
updates.  The first numba call per signature pays JIT/cache-load cost;
it is excluded by a warmup pass.
"""

import argparse
import time

import numpy as np

from nmprot.kernels import _numba, _numpy

CASES = [
    ("softmax 960x60 f32", "softmax_rows", (960, 60), np.float32),
    ("softmax 960x60 f64", "softmax_rows", (960, 60), np.float64),
    ("masked softmax 960x60 f32", "masked_softmax_rows", (960, 60), np.float32),
    ("softmax backward 960x60 f32", "softmax_rows_backward", (960, 60), np.float32),
    ("adam update 200k f32", "adam_update", (200_000,), np.float32),
]


def _args_for(fn_name, shape, dtype, rng):
    if fn_name == "softmax_rows":
        return (np.ascontiguousarray(rng.normal(size=shape).astype(dtype)),)
    if fn_name == "masked_softmax_rows":
        x = np.ascontiguousarray(rng.normal(size=shape).astype(dtype))
        mask = np.ascontiguousarray(rng.random(shape) < 0.8)
        mask[:, 0] = True
        return (x, mask)
    if fn_name == "softmax_rows_backward":
        x = np.ascontiguousarray(rng.normal(size=shape).astype(dtype))
        y = _numpy.softmax_rows(x)
        gy = np.ascontiguousarray(rng.normal(size=shape).astype(dtype))
        return (y, gy)
    if fn_name == "adam_update":
        p = rng.normal(size=shape).astype(dtype)
        g = rng.normal(size=shape).astype(dtype)
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        return (p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 0.1, 0.001)
    raise ValueError(fn_name)


def _time(fn, args, repeats):
    fn(*args)  # warmup (JIT compile / cache load for numba)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn(*args)
    return (time.perf_counter() - t0) / repeats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    print(f"{'case':34s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for label, fn_name, shape, dtype in CASES:
        rng = np.random.default_rng(0)
        call_args = _args_for(fn_name, shape, dtype, rng)
        t_np = _time(getattr(_numpy, fn_name), call_args, args.repeats)
        t_nb = _time(getattr(_numba, fn_name), call_args, args.repeats)
        print(
            f"{label:34s} {t_np * 1e6:9.1f}u {t_nb * 1e6:9.1f}u {t_np / t_nb:7.2f}x"
        )


if __name__ == "__main__":
    main()
