"""Time the oracle's joint-cost kernel: numba vs pure numpy.

    python3 benchmarks/bench_kernels.py [--chains 3] [--options 40] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from sfcrel import _kernels
from sfcrel.reliability import build_penalty


def make_inputs(chains: int, options: int, servers: int, links: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    n = chains * options
    server = rng.uniform(0.0, 0.4, size=(n, servers)) * (rng.random((n, servers)) < 0.3)
    link = rng.uniform(0.0, 0.3, size=(n, links, 2)) * (rng.random((n, links, 2)) < 0.2)
    const = rng.uniform(0.0, 0.01, size=n)
    offsets = np.arange(0, n + 1, options, dtype=np.int64)
    pen = build_penalty()
    return server, link, const, offsets, np.asarray(pen.slopes), np.asarray(pen.intercepts), 0.05, 0.01


def best_of(fn, args, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--chains", type=int, default=3)
    ap.add_argument("--options", type=int, default=40)
    ap.add_argument("--servers", type=int, default=4)
    ap.add_argument("--links", type=int, default=6)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    inputs = make_inputs(args.chains, args.options, args.servers, args.links)
    total = args.options ** args.chains
    print(f"joint assignments: {total}")
    t_np = best_of(_kernels.joint_costs_numpy, inputs, args.repeat)
    print(f"numpy : {t_np:.4f} s")
    if _kernels.joint_costs_numba is None:
        print("numba : unavailable (SFCREL_DISABLE_NUMBA set or numba missing)")
        return
    _kernels.joint_costs_numba(*inputs)  # compile outside the timing
    t_nb = best_of(_kernels.joint_costs_numba, inputs, args.repeat)
    same = np.allclose(_kernels.joint_costs_numpy(*inputs), _kernels.joint_costs_numba(*inputs), rtol=1e-12, atol=1e-15)
    print(f"numba : {t_nb:.4f} s  (speedup x{t_np / t_nb:.1f}, results agree: {same})")


if __name__ == "__main__":
    main()
