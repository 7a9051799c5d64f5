"""Pure-Python GF(2^8) kernel.

Fallback for environments without the compiled extension. Scalar
multiplication of a whole shard is done with bytes.translate over a
precomputed 256-byte table, and row accumulation with big-int XOR, so
even the fallback runs most of its work in C.
"""

from __future__ import annotations

from typing import Sequence

_PRIM_POLY = 0x11D  # x^8 + x^4 + x^3 + x^2 + 1

EXP = [0] * 512
LOG = [0] * 256

_x = 1
for _i in range(255):
    EXP[_i] = _x
    LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= _PRIM_POLY
for _i in range(255, 512):
    EXP[_i] = EXP[_i - 255]


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return EXP[LOG[a] + LOG[b]]


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("no inverse of 0 in GF(2^8)")
    return EXP[255 - LOG[a]]


_MUL_TABLES: dict[int, bytes] = {}


def _mul_table(c: int) -> bytes:
    table = _MUL_TABLES.get(c)
    if table is None:
        table = bytes(gf_mul(c, b) for b in range(256))
        _MUL_TABLES[c] = table
    return table


def matmul(matrix: Sequence[Sequence[int]], shards: Sequence[bytes]) -> list[bytes]:
    """Multiply a GF(2^8) matrix by a column of equal-length byte shards.

    Output row i is XOR_j of matrix[i][j] * shards[j] (byte-wise field
    multiplication). All shards must have the same length.
    """
    if not shards:
        return [b"" for _ in matrix]
    length = len(shards[0])
    if any(len(s) != length for s in shards):
        raise ValueError("shards must have equal length")
    if length == 0:
        return [b"" for _ in matrix]

    out: list[bytes] = []
    for row in matrix:
        if len(row) != len(shards):
            raise ValueError("matrix width must match shard count")
        acc = 0
        for coeff, shard in zip(row, shards):
            if coeff == 0:
                continue
            if coeff == 1:
                term = shard
            else:
                term = shard.translate(_mul_table(coeff))
            acc ^= int.from_bytes(term, "big")
        out.append(acc.to_bytes(length, "big"))
    return out


BACKEND = "python"
