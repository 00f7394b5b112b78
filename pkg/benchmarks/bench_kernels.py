#!/usr/bin/env python3
"""Benchmark the compiled MLP kernels against the numpy fallback.

Times the operations the training loop is made of, at training shapes
(batch 64, hidden 300), plus a composite "one agent update" measurement.

Run:  python benchmarks/bench_kernels.py [--batch 64] [--hidden 300] [--repeats 2000]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from edgeplan.kernels import available_backends


def _make_params(rng, in_dim, hidden):
    def layer(fi, fo):
        bound = 1.0 / np.sqrt(fi)
        return rng.uniform(-bound, bound, (fi, fo)), rng.uniform(-bound, bound, fo)

    W1, b1 = layer(in_dim, hidden)
    W2, b2 = layer(hidden, hidden)
    W3, b3 = layer(hidden, 1)
    return W1, b1, W2, b2, W3, b3


def _time(fn, repeats):
    fn()  # warm-up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_backend(impl, batch, hidden, repeats, rng):
    in_dim = 13
    W1, b1, W2, b2, W3, b3 = _make_params(rng, in_dim, hidden)
    X = rng.standard_normal((batch, in_dim))
    y, h1, h2 = impl.forward(W1, b1, W2, b2, W3, b3, X, False)
    dy = rng.standard_normal(batch)
    params = [W1.copy(), b1.copy(), W2.copy(), b2.copy(), W3.copy(), b3.copy()]
    grads = impl.backward(W1, W2, W3, X, h1, h2, y, dy, False)[:6]
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    target = [p.copy() for p in params]

    results = {
        "forward": _time(lambda: impl.forward(W1, b1, W2, b2, W3, b3, X, False), repeats),
        "backward": _time(lambda: impl.backward(W1, W2, W3, X, h1, h2, y, dy, False), repeats),
        "adam_step": _time(lambda: impl.adam_step(params, list(grads), m, v, 1,
                                                  1e-3, 0.9, 0.999, 1e-8), repeats),
        "blend": _time(lambda: impl.blend(target, params, 0.01), repeats),
    }

    def update_step():
        # Shape of one training update: 4 forwards, 2 backwards, 2 optimizer
        # steps, 2 soft updates (actor pass approximated at critic width).
        yy, hh1, hh2 = impl.forward(W1, b1, W2, b2, W3, b3, X, False)
        impl.forward(W1, b1, W2, b2, W3, b3, X, False)
        impl.forward(W1, b1, W2, b2, W3, b3, X, True)
        impl.forward(W1, b1, W2, b2, W3, b3, X, True)
        g = impl.backward(W1, W2, W3, X, hh1, hh2, yy, dy, False)[:6]
        impl.backward(W1, W2, W3, X, hh1, hh2, yy, dy, True)
        impl.adam_step(params, list(g), m, v, 1, 1e-3, 0.9, 0.999, 1e-8)
        impl.adam_step(params, list(g), m, v, 1, 1e-4, 0.9, 0.999, 1e-8)
        impl.blend(target, params, 0.01)
        impl.blend(target, params, 0.01)

    results["update_step"] = _time(update_step, max(1, repeats // 4))
    return results


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=64)
    parser.add_argument("--hidden", type=int, default=300)
    parser.add_argument("--repeats", type=int, default=2000)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)} | batch={args.batch} hidden={args.hidden}")
    timings = {}
    for name, impl in backends.items():
        rng = np.random.default_rng(0)
        timings[name] = bench_backend(impl, args.batch, args.hidden, args.repeats, rng)

    ops = list(next(iter(timings.values())))
    header = f"{'op':<12}" + "".join(f"{name + ' (us)':>16}" for name in timings)
    if len(timings) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for op in ops:
        row = f"{op:<12}" + "".join(f"{timings[name][op] * 1e6:>16.1f}" for name in timings)
        if len(timings) == 2:
            a, b = (timings[name][op] for name in timings)
            row += f"{a / b:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
