"""NumPy implementations of the hot multilinear kernels.

This is the pure-Python fallback for the compiled extension in
``_kernels.pyx``; both expose the same four functions with identical
semantics. Inputs are assumed validated (C-contiguous float64, matching
column counts) by the callers in :mod:`tensoma.tensor_core`.
"""

import numpy as np


def khatri_rao(a, b):
    """Column-wise Kronecker product; rows of ``b`` vary fastest."""
    m, d = a.shape
    n = b.shape[0]
    return (a[:, None, :] * b[None, :, :]).reshape(m * n, d)


def cp_reconstruct(a1, a2, rs):
    """Sum of rank-one outer products, shape (a1.rows, a2.rows, rs.rows)."""
    return np.einsum("ir,jr,kr->ijk", a1, a2, rs, optimize=True)


def sumsq(flat):
    """Sum of squared entries of a 1-D array."""
    return float(np.dot(flat, flat))


def had3_sum(s1, s2, s3):
    """Sum of entries of the elementwise triple product of square matrices."""
    return float(np.sum(s1 * s2 * s3))
