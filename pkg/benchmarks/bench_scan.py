#!/usr/bin/env python3
"""Benchmark the compiled directional-scan kernel against the pure-PyTorch fallback.

Times forward and forward+backward passes over the shapes the generator
actually uses. Run after an editable install:

    python benchmarks/bench_scan.py [--size 256] [--channels 32] [--repeats 5]
"""

import argparse
import statistics
import time

import torch

from cloudgan.scan import FOUR_DIRECTIONS, directional_pass, has_compiled_kernel


def time_once(impl: str, x: torch.Tensor, gains: torch.Tensor, backward: bool) -> float:
    if backward:
        x = x.detach().requires_grad_(True)
        gains = gains.detach().requires_grad_(True)
    start = time.perf_counter()
    outs = [directional_pass(x, gains, d, impl=impl) for d in FOUR_DIRECTIONS]
    total = sum(o.sum() for o in outs)
    if backward:
        total.backward()
    return time.perf_counter() - start


def bench(impl: str, x, gains, backward: bool, repeats: int) -> float:
    time_once(impl, x, gains, backward)  # warm-up
    return statistics.median(time_once(impl, x, gains, backward) for _ in range(repeats))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=2)
    parser.add_argument("--channels", type=int, default=32)
    parser.add_argument("--size", type=int, default=256)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    torch.manual_seed(0)
    x = torch.randn(args.batch, args.channels, args.size, args.size)
    gains = torch.full((args.channels,), 0.25)

    impls = ["python"] + (["cython"] if has_compiled_kernel() else [])
    if "cython" not in impls:
        print("compiled kernel not built; benchmarking the fallback only")

    shape = f"{args.batch}x{args.channels}x{args.size}x{args.size}"
    print(f"directional scan over 4 directions, input {shape}, median of {args.repeats}\n")
    print(f"{'pass':<18} {'impl':<8} {'seconds':>9}")
    results = {}
    for backward in (False, True):
        label = "forward+backward" if backward else "forward"
        for impl in impls:
            seconds = bench(impl, x, gains, backward, args.repeats)
            results[(label, impl)] = seconds
            print(f"{label:<18} {impl:<8} {seconds:>9.4f}")
        if len(impls) == 2:
            speedup = results[(label, "python")] / results[(label, "cython")]
            print(f"{'':<18} {'speedup':<8} {speedup:>8.1f}x")


if __name__ == "__main__":
    main()
