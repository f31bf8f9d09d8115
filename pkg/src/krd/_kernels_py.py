"""Pure numpy fallback for the compiled kernels in ``_kernels.pyx``.

Results are bit-identical to the compiled versions: uint64 arithmetic wraps
the same way, and the CSR product accumulates contributions of one row in
the same left-to-right order.
"""

import numpy as np

GAMMA = np.uint64(0x9E3779B97F4A7C15)
MIX_A = np.uint64(0xBF58476D1CE4E5B9)
MIX_B = np.uint64(0x94D049BB133111EB)

_U64_MASK = (1 << 64) - 1


def mix64_block(key: int, start: int, n: int) -> np.ndarray:
    """Values ``splitmix64(key + (start+1..start+n) * GAMMA)`` as uint64[n]."""
    counters = np.arange(1, n + 1, dtype=np.uint64) + np.uint64(start & _U64_MASK)
    z = np.uint64(key & _U64_MASK) + counters * GAMMA
    z = (z ^ (z >> np.uint64(30))) * MIX_A
    z = (z ^ (z >> np.uint64(27))) * MIX_B
    return z ^ (z >> np.uint64(31))


def csr_matmul(indptr: np.ndarray, indices: np.ndarray,
               data: np.ndarray, x: np.ndarray) -> np.ndarray:
    """CSR sparse matrix times dense matrix."""
    nrows = len(indptr) - 1
    out = np.zeros((nrows, x.shape[1]), dtype=np.float64)
    if len(data) == 0:
        return out
    contrib = data[:, None] * x[indices]
    # add.at applies entries strictly in index order, so the accumulation
    # order matches the compiled serial loop bit for bit (reduceat does not:
    # its inner reduction is unrolled/pairwise for longer segments)
    np.add.at(out, np.repeat(np.arange(nrows), np.diff(indptr)), contrib)
    return out
