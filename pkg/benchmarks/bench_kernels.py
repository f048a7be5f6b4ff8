#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy fallback.

Times im2col/col2im alone, a conv2d forward+backward, and one full training
step at toy scale under each available backend.

    python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from sigweave.losses import quad_step_terms
from sigweave.mci import MciQuad
from sigweave.model import ModelConfig, init_model
from sigweave.nn import kernels
from sigweave.nn import tensor as T
from sigweave.nn.tensor import Tensor


def timeit(fn, repeats):
    fn()  # warmup
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(backend: str, repeats: int) -> dict:
    kernels.set_backend(backend)
    rng = np.random.default_rng(0)
    results = {}

    x = rng.standard_normal((8, 32, 16, 16)).astype(np.float32)
    cols = kernels.im2col(x, 4, 2, 1)
    results["im2col 8x32x16x16 k4s2"] = timeit(lambda: kernels.im2col(x, 4, 2, 1), repeats)
    results["col2im 8x32x16x16 k4s2"] = timeit(lambda: kernels.col2im(cols, 16, 16, 4, 2, 1), repeats)

    xt = Tensor(rng.standard_normal((8, 1, 16, 16)).astype(np.float32))
    w = Tensor(rng.standard_normal((32, 1, 4, 4)).astype(np.float32) * 0.1, requires_grad=True)
    b = Tensor(np.zeros(32, dtype=np.float32), requires_grad=True)

    def conv_fwd_bwd():
        w.zero_grad()
        b.zero_grad()
        T.mean(T.conv2d(xt, w, b, 2, 1)).backward()

    results["conv2d fwd+bwd"] = timeit(conv_fwd_bwd, repeats)

    cfg = ModelConfig(H=16, W=16, d=100, partition=(50, 50), widths=(8, 16, 32, 64), seed=1)
    state = init_model(cfg)
    quad = MciQuad(members=((0, 0), (0, 1), (1, 0), (1, 1)), varying=(0, 1))
    signals = rng.uniform(0, 1, (4, 16, 16))

    def train_graph():
        state.zero_grad()
        terms = quad_step_terms(state, quad, signals)
        j_all = terms["j_recon"] + terms["j_exc"] + terms["j_exc_gen"] \
            + 0.2 * terms["j_cyc"] + 0.1 * terms["j_adv"]
        j_all.backward()
        terms["j_disc"].backward()

    results["full training step graph"] = timeit(train_graph, repeats)
    return results


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    backends = kernels.available_backends()
    print(f"available backends: {', '.join(backends)} (default: {kernels.active_backend()})")
    table = {b: bench_backend(b, args.repeats) for b in backends}
    kernels.set_backend("native" if "native" in backends else "numpy")

    names = list(next(iter(table.values())))
    width = max(len(n) for n in names)
    header = f"{'benchmark':<{width}}  " + "  ".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"  {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for name in names:
        row = f"{name:<{width}}  "
        row += "  ".join(f"{table[b][name] * 1e3:>10.3f}ms" for b in backends)
        if len(backends) > 1 and "native" in table and "numpy" in table:
            row += f"  {table['numpy'][name] / table['native'][name]:>7.2f}x"
        print(row)


if __name__ == "__main__":
    main()
