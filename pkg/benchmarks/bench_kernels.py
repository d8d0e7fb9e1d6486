#!/usr/bin/env python3
"""Time the numba kernels against their numpy fallbacks.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeat 20 --output bench.json

Both variants are imported directly, so HOD_NUMBA has no effect here.
"""

import argparse
import json
import statistics
import time

import numpy as np

from hod import _accel
from hod.forest import _best_split_numba, _best_split_numpy, _route_numba, _route_numpy, train_tree
from hod.nn.lstm import LSTMModel, _forward_numba, _forward_numpy, _grads_numba, _grads_numpy
from hod.sim import _first_order_numba, _first_order_numpy


def median_time(fn, repeat):
    fn()  # compile / warm caches
    samples = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples)


def cases(rng):
    n = 900_000  # a 30 minute recording
    x = rng.normal(size=n) * 1e-12
    pole = np.full(n, np.exp(-0.2))
    pole[n // 2:] = np.exp(-0.5)
    yield "first_order (900k samples)", (lambda: _first_order_numba(x, pole, 0.0),
                                         lambda: _first_order_numpy(x, pole, 0.0))

    for H in (1, 5, 20):
        m = LSTMModel.init(H, seed=1)
        X = np.ascontiguousarray(rng.normal(size=(64, 100)) * 0.3)
        y = (rng.random(64) > 0.5).astype(np.float64)
        args = m._args()
        yield f"lstm forward H={H} (64 windows)", (lambda a=args: _forward_numba(*a, X),
                                                   lambda a=args: _forward_numpy(*a, X))
        yield f"lstm grads H={H} (64 windows)", (lambda a=args: _grads_numba(*a, X, y),
                                                 lambda a=args: _grads_numpy(*a, X, y))

    X = rng.normal(size=(20_000, 100)).astype(np.float32)
    y = (X[:, -1] + 0.3 * rng.normal(size=len(X)) > 0).astype(np.float64)
    idx = np.arange(len(X))
    feats = np.sort(rng.choice(100, 10, replace=False))
    yield "best_split (20k rows, 10 features)", (
        lambda: _best_split_numba(X, y, idx, feats, 5),
        lambda: _best_split_numpy(X, y, idx, feats, 5))

    tree = train_tree(X[:5000], y[:5000], seed=2)
    yield f"route ({len(tree)} nodes, 20k rows)", (
        lambda: _route_numba(tree.feature, tree.threshold, tree.left, tree.right, X),
        lambda: _route_numpy(tree.feature, tree.threshold, tree.left, tree.right, X))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--output", help="write results as JSON")
    args = parser.parse_args()

    if not _accel.NUMBA_AVAILABLE:
        parser.error("numba is not installed; nothing to compare")

    rng = np.random.default_rng(args.seed)
    rows = []
    print(f"{'kernel':40s} {'numba':>12s} {'numpy':>12s} {'speedup':>8s}")
    for name, (fast, slow) in cases(rng):
        t_nb = median_time(fast, args.repeat)
        t_np = median_time(slow, args.repeat)
        rows.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np})
        print(f"{name:40s} {t_nb * 1e3:10.3f}ms {t_np * 1e3:10.3f}ms {t_np / t_nb:7.1f}x")
    if args.output:
        with open(args.output, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
