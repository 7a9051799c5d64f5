"""GF(2^8) kernel selection: compiled extension if built, else pure Python.

`matmul` is the hot path of erasure encode/decode; everything else here
is small-matrix bookkeeping that stays in Python either way.
"""

from __future__ import annotations

from typing import Sequence

from . import _gf256_py

try:
    from . import _gf256 as _kernel  # type: ignore[attr-defined]
except ImportError:
    _kernel = _gf256_py

matmul = _kernel.matmul
BACKEND: str = _kernel.BACKEND

gf_mul = _gf256_py.gf_mul
gf_inv = _gf256_py.gf_inv
EXP = _gf256_py.EXP
LOG = _gf256_py.LOG


def matrix_invert(matrix: Sequence[Sequence[int]]) -> list[list[int]]:
    """Invert a square GF(2^8) matrix by Gauss-Jordan elimination."""
    size = len(matrix)
    aug = [list(row) + [1 if i == j else 0 for j in range(size)] for i, row in enumerate(matrix)]
    for col in range(size):
        pivot = next((r for r in range(col, size) if aug[r][col] != 0), None)
        if pivot is None:
            raise ValueError("matrix is singular")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = gf_inv(aug[col][col])
        aug[col] = [gf_mul(inv, v) for v in aug[col]]
        for r in range(size):
            if r != col and aug[r][col] != 0:
                factor = aug[r][col]
                aug[r] = [v ^ gf_mul(factor, p) for v, p in zip(aug[r], aug[col])]
    return [row[size:] for row in aug]


def matrix_multiply(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> list[list[int]]:
    rows, inner, cols = len(a), len(b), len(b[0])
    out = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        for j in range(cols):
            acc = 0
            for k in range(inner):
                acc ^= gf_mul(a[i][k], b[k][j])
            out[i][j] = acc
    return out


def vandermonde(rows: int, cols: int) -> list[list[int]]:
    # Row r evaluates the message polynomial at point r: [r^0, r^1, ...].
    return [[_pow(r, c) for c in range(cols)] for r in range(rows)]


def _pow(base: int, exp: int) -> int:
    if exp == 0:
        return 1
    if base == 0:
        return 0
    return EXP[(LOG[base] * exp) % 255]
