#!/usr/bin/env python3
"""Throughput comparison of the GF(2^8) kernels: compiled extension vs
pure Python, across segment sizes and erasure parameters.

    python benchmarks/erasure_kernel.py [--quick]
"""

from __future__ import annotations

import argparse
import os
import statistics
import time

from soverclaim.storage import _gf256_py
from soverclaim.storage import gf256
from soverclaim.storage.erasure import ErasureParams, generator_matrix

try:
    from soverclaim.storage import _gf256 as compiled
except ImportError:
    compiled = None


def _bench_matmul(matmul, matrix, stripes, repeats: int) -> float:
    """Return MB/s of input processed."""
    total_bytes = sum(len(s) for s in stripes)
    timings = []
    for _ in range(repeats):
        started = time.perf_counter()
        matmul(matrix, stripes)
        timings.append(time.perf_counter() - started)
    return total_bytes / statistics.median(timings) / 1e6


def main() -> None:
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="small sizes, fewer repeats")
    args = parser.parse_args()

    sizes = [64 * 1024, 1024 * 1024] if args.quick else [64 * 1024, 1024 * 1024, 4 * 1024 * 1024]
    repeats = 3 if args.quick else 7
    params_list = [ErasureParams(2, 4), ErasureParams(3, 5)]

    backends = [("python", _gf256_py.matmul)]
    if compiled is not None:
        backends.insert(0, ("cython", compiled.matmul))

    print(f"active kernel at import: {gf256.BACKEND}")
    print(f"{'k,n':<8}{'segment':<12}{'backend':<10}{'parity MB/s':>14}")
    results: dict[tuple, dict[str, float]] = {}
    for params in params_list:
        gen = generator_matrix(params.k, params.n)
        parity_rows = [list(row) for row in gen[params.k:]]
        for size in sizes:
            stripe_len = (size + params.k - 1) // params.k
            stripes = [os.urandom(stripe_len) for _ in range(params.k)]
            for name, matmul in backends:
                rate = _bench_matmul(matmul, parity_rows, stripes, repeats)
                results.setdefault((params.k, params.n, size), {})[name] = rate
                print(f"{params.k},{params.n:<6}{size // 1024:>7} KiB {name:<10}{rate:>14.1f}")

    if compiled is not None:
        ratios = [
            rates["cython"] / rates["python"]
            for rates in results.values()
            if "cython" in rates and rates["python"] > 0
        ]
        print(f"\ncompiled/pure speedup: median {statistics.median(ratios):.1f}x "
              f"(min {min(ratios):.1f}x, max {max(ratios):.1f}x)")
    else:
        print("\ncompiled kernel not built; showing pure-Python numbers only")


if __name__ == "__main__":
    main()
