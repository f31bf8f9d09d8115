# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: counter-based RNG mixing and CSR times dense.

Both functions have bit-identical numpy fallbacks in ``_kernels_py``;
``krd.backend`` picks whichever is importable.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef unsigned long long u64

# splitmix64 constants (Steele, Lea & Flood; public domain reference code).
cdef u64 GAMMA = 0x9E3779B97F4A7C15ULL
cdef u64 MIX_A = 0xBF58476D1CE4E5B9ULL
cdef u64 MIX_B = 0x94D049BB133111EBULL


cdef inline u64 _mix(u64 z) nogil:
    z = (z ^ (z >> 30)) * MIX_A
    z = (z ^ (z >> 27)) * MIX_B
    return z ^ (z >> 31)


def mix64_block(u64 key, u64 start, Py_ssize_t n):
    """Values ``splitmix64(key + (start+1..start+n) * GAMMA)`` as uint64[n]."""
    out = np.empty(n, dtype=np.uint64)
    cdef u64[::1] view = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            view[i] = _mix(key + (start + 1 + <u64> i) * GAMMA)
    return out


def csr_matmul(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
               double[::1] data, double[:, ::1] x):
    """CSR sparse matrix times dense matrix, row-serial accumulation."""
    cdef Py_ssize_t nrows = indptr.shape[0] - 1
    cdef Py_ssize_t width = x.shape[1]
    out = np.zeros((nrows, width), dtype=np.float64)
    cdef double[:, ::1] res = out
    cdef Py_ssize_t i, jj, k
    cdef cnp.int64_t col
    cdef double v
    with nogil:
        for i in range(nrows):
            for jj in range(indptr[i], indptr[i + 1]):
                col = indices[jj]
                v = data[jj]
                for k in range(width):
                    res[i, k] += v * x[col, k]
    return out
