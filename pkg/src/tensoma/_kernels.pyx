# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot multilinear kernels.

Mirrors ``_kernels_np`` exactly; selected at import time by ``_backend``.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def khatri_rao(double[:, ::1] a, double[:, ::1] b):
    """Column-wise Kronecker product; rows of ``b`` vary fastest."""
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t d = a.shape[1]
    out = np.empty((m * n, d), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t p, q, r
    cdef double ap
    for p in range(m):
        for r in range(d):
            ap = a[p, r]
            for q in range(n):
                o[p * n + q, r] = ap * b[q, r]
    return out


def cp_reconstruct(double[:, ::1] a1, double[:, ::1] a2, double[:, ::1] rs):
    """Sum of rank-one outer products, shape (a1.rows, a2.rows, rs.rows)."""
    cdef Py_ssize_t ni = a1.shape[0]
    cdef Py_ssize_t nj = a2.shape[0]
    cdef Py_ssize_t nk = rs.shape[0]
    cdef Py_ssize_t d = a1.shape[1]
    out = np.zeros((ni, nj, nk), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef Py_ssize_t i, j, k, r
    cdef double ai, aij
    for r in range(d):
        for i in range(ni):
            ai = a1[i, r]
            for j in range(nj):
                aij = ai * a2[j, r]
                for k in range(nk):
                    o[i, j, k] += aij * rs[k, r]
    return out


def sumsq(double[::1] flat):
    """Sum of squared entries of a 1-D array."""
    cdef Py_ssize_t n = flat.shape[0]
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        acc += flat[i] * flat[i]
    return acc


def had3_sum(double[:, ::1] s1, double[:, ::1] s2, double[:, ::1] s3):
    """Sum of entries of the elementwise triple product of square matrices."""
    cdef Py_ssize_t n = s1.shape[0]
    cdef Py_ssize_t m = s1.shape[1]
    cdef double acc = 0.0
    cdef Py_ssize_t i, j
    for i in range(n):
        for j in range(m):
            acc += s1[i, j] * s2[i, j] * s3[i, j]
    return acc
