# cython: boundscheck=False, wraparound=False, cdivision=True
"""Strict-order float64 reduction kernels.

Every reduction here accumulates strictly left to right in IEEE double
precision. That ordering is the contract: round aggregation and the
distance/similarity statistics must not depend on how a BLAS or
pairwise reduction happens to split the sum. Compiled with
-ffp-contract=off these loops are bitwise-identical to the NumPy
fallback in _kernels_py.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def strict_dot(double[::1] a, double[::1] b):
    """Left-to-right dot product of two equal-length vectors."""
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += a[i] * b[i]
    return acc


def strict_sqdist(double[::1] a, double[::1] b):
    """Left-to-right sum of squared differences."""
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double acc = 0.0
    cdef double d
    for i in range(n):
        d = a[i] - b[i]
        acc += d * d
    return acc


def strict_accumulate(double[::1] out, double coeff, double[::1] vec):
    """out += coeff * vec, elementwise, in place."""
    cdef Py_ssize_t i, n = out.shape[0]
    for i in range(n):
        out[i] += coeff * vec[i]
