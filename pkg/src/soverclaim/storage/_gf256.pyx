# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled GF(2^8) kernel: matrix x shard-column multiplication.

Same contract as _gf256_py.matmul; this version walks the bytes in tight
C loops over a full 256x256 multiplication table."""

from cpython.bytes cimport PyBytes_AS_STRING, PyBytes_FromStringAndSize
from libc.stdlib cimport free, malloc
from libc.string cimport memset

cdef int PRIM_POLY = 0x11D

cdef unsigned char MUL[256][256]

cdef void _init_tables() noexcept:
    cdef int exp[512]
    cdef int log[256]
    cdef int i, x, a, b
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x <<= 1
        if x & 0x100:
            x ^= PRIM_POLY
    for i in range(255, 512):
        exp[i] = exp[i - 255]
    for a in range(256):
        MUL[0][a] = 0
        MUL[a][0] = 0
    for a in range(1, 256):
        for b in range(1, 256):
            MUL[a][b] = <unsigned char> exp[log[a] + log[b]]

_init_tables()


def matmul(matrix, shards):
    """Multiply a GF(2^8) matrix by a column of equal-length byte shards."""
    cdef Py_ssize_t n_in = len(shards)
    cdef Py_ssize_t length
    cdef Py_ssize_t j, k
    cdef const unsigned char** ins
    cdef bytes shard
    cdef bytes result
    cdef unsigned char coeff
    cdef const unsigned char* src
    cdef unsigned char* dst
    cdef const unsigned char* row_table

    if n_in == 0:
        return [b"" for _ in matrix]
    length = len(shards[0])
    for j in range(n_in):
        if len(shards[j]) != length:
            raise ValueError("shards must have equal length")
    if length == 0:
        return [b"" for _ in matrix]

    ins = <const unsigned char**> malloc(n_in * sizeof(unsigned char*))
    if ins == NULL:
        raise MemoryError()
    try:
        for j in range(n_in):
            shard = shards[j]
            ins[j] = <const unsigned char*> PyBytes_AS_STRING(shard)

        out = []
        for row in matrix:
            if len(row) != n_in:
                raise ValueError("matrix width must match shard count")
            result = PyBytes_FromStringAndSize(NULL, length)
            dst = <unsigned char*> PyBytes_AS_STRING(result)
            memset(dst, 0, length)
            for j in range(n_in):
                coeff = <unsigned char> row[j]
                if coeff == 0:
                    continue
                src = ins[j]
                if coeff == 1:
                    for k in range(length):
                        dst[k] ^= src[k]
                else:
                    row_table = MUL[coeff]
                    for k in range(length):
                        dst[k] ^= row_table[src[k]]
            out.append(result)
        return out
    finally:
        free(ins)


BACKEND = "cython"
