"""Systematic Reed-Solomon erasure coding over GF(2^8).

A segment is striped into k contiguous stripes (zero-padded), and n
shards are produced such that any k of them reconstruct the segment
exactly. Shards 0..k-1 are the data stripes themselves; the rest are
parity rows of a Vandermonde-derived generator matrix, so every k-row
submatrix of the generator is invertible.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

from ..errors import NotEnoughShards
from . import gf256

GF_ORDER = 256


@dataclass(frozen=True)
class ErasureParams:
    k: int
    n: int

    def __post_init__(self) -> None:
        if not (1 <= self.k <= self.n < GF_ORDER):
            raise ValueError(f"invalid erasure parameters k={self.k}, n={self.n}")


@lru_cache(maxsize=32)
def generator_matrix(k: int, n: int) -> tuple[tuple[int, ...], ...]:
    vand = gf256.vandermonde(n, k)
    top_inv = gf256.matrix_invert(vand[:k])
    gen = gf256.matrix_multiply(vand, top_inv)
    return tuple(tuple(row) for row in gen)


def shard_length(params: ErasureParams, data_len: int) -> int:
    return (data_len + params.k - 1) // params.k


def encode(params: ErasureParams, data: bytes) -> list[bytes]:
    """Split data into n shards; any k reconstruct it."""
    k, n = params.k, params.n
    stripe_len = shard_length(params, len(data))
    padded = data.ljust(k * stripe_len, b"\x00")
    stripes = [padded[i * stripe_len : (i + 1) * stripe_len] for i in range(k)]
    gen = generator_matrix(k, n)
    parity = gf256.matmul(gen[k:], stripes)
    return stripes + parity


def decode(params: ErasureParams, shards: Mapping[int, bytes], data_len: int) -> bytes:
    """Reconstruct the original data from any k (index -> shard) entries."""
    k = params.k
    if len(shards) < k:
        raise NotEnoughShards(f"need {k} shards, have {len(shards)}")
    indices = sorted(shards)[:k]
    for idx in indices:
        if not (0 <= idx < params.n):
            raise ValueError(f"shard index {idx} out of range for n={params.n}")

    gen = generator_matrix(k, params.n)
    if indices == list(range(k)):
        stripes = [shards[i] for i in indices]
    else:
        sub = [list(gen[i]) for i in indices]
        inv = gf256.matrix_invert(sub)
        stripes = gf256.matmul(inv, [shards[i] for i in indices])
    return b"".join(stripes)[:data_len]
