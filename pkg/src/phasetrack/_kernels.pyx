# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled solver kernel: Jacobi-preconditioned CG on a diagonal-plus-CSR operator.

Mirrors phasetrack._kernels_py.cg_kernel; keep the two in sync.
"""

from libc.math cimport sqrt

import numpy as np


cdef double _matvec_residual_norm(double[::1] diag, int[::1] indptr, int[::1] indices,
                                  double[::1] data, double[::1] b, double[::1] x,
                                  double[::1] r) nogil:
    # r = b - (diag*x + K x); returns ||r||_2
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc, nrm = 0.0
    for i in range(n):
        acc = diag[i] * x[i]
        for j in range(indptr[i], indptr[i + 1]):
            acc += data[j] * x[indices[j]]
        r[i] = b[i] - acc
        nrm += r[i] * r[i]
    return sqrt(nrm)


def cg_kernel(double[::1] diag, int[::1] indptr, int[::1] indices, double[::1] data,
              double[::1] inv_precond, double[::1] b, double[::1] x,
              double rtol, int max_iter):
    """Same contract as the numpy fallback: warm start in x, true-residual certified."""
    cdef Py_ssize_t n = b.shape[0]
    cdef Py_ssize_t i, j
    cdef double bnorm = 0.0
    for i in range(n):
        bnorm += b[i] * b[i]
    bnorm = sqrt(bnorm)
    if bnorm == 0.0:
        for i in range(n):
            x[i] = 0.0
        return 0, 0.0, True

    cdef double tol = rtol * bnorm
    r_arr = np.empty(n, dtype=np.float64)
    z_arr = np.empty(n, dtype=np.float64)
    p_arr = np.empty(n, dtype=np.float64)
    ap_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] r = r_arr
    cdef double[::1] z = z_arr
    cdef double[::1] p = p_arr
    cdef double[::1] ap = ap_arr

    cdef double rnorm = _matvec_residual_norm(diag, indptr, indices, data, b, x, r)
    if rnorm <= tol:
        return 0, rnorm / bnorm, True

    cdef double rz = 0.0
    for i in range(n):
        z[i] = inv_precond[i] * r[i]
        p[i] = z[i]
        rz += r[i] * z[i]

    cdef int iters = 0
    cdef double acc, p_ap, alpha, rz_new, beta
    while iters < max_iter:
        p_ap = 0.0
        for i in range(n):
            acc = diag[i] * p[i]
            for j in range(indptr[i], indptr[i + 1]):
                acc += data[j] * p[indices[j]]
            ap[i] = acc
            p_ap += p[i] * acc
        alpha = rz / p_ap
        rnorm = 0.0
        for i in range(n):
            x[i] += alpha * p[i]
            r[i] -= alpha * ap[i]
            rnorm += r[i] * r[i]
        rnorm = sqrt(rnorm)
        iters += 1
        if rnorm <= tol:
            rnorm = _matvec_residual_norm(diag, indptr, indices, data, b, x, r)
            if rnorm <= tol:
                return iters, rnorm / bnorm, True
            rz = 0.0
            for i in range(n):
                z[i] = inv_precond[i] * r[i]
                p[i] = z[i]
                rz += r[i] * z[i]
            continue
        rz_new = 0.0
        for i in range(n):
            z[i] = inv_precond[i] * r[i]
            rz_new += r[i] * z[i]
        beta = rz_new / rz
        for i in range(n):
            p[i] = z[i] + beta * p[i]
        rz = rz_new
    return iters, rnorm / bnorm, False
