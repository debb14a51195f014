# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled product-Matern Gram kernels (hot loop of training and selection)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p, sqrt


def gram(int nu_code, double[:, ::1] xa, double[:, ::1] xb, double[::1] ell):
    """Pairwise product covariance without the signal-variance factor.

    nu_code: 0 -> exponential (nu=1/2), 1 -> Matern 3/2, 2 -> squared
    exponential (nu=inf).
    """
    cdef Py_ssize_t na = xa.shape[0], nb = xb.shape[0], d = xa.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((na, nb))
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, k
    cdef double acc, acc2, r, s
    cdef double s3 = sqrt(3.0)

    if nu_code == 0:
        for i in range(na):
            for j in range(nb):
                acc = 0.0
                for k in range(d):
                    acc += fabs(xa[i, k] - xb[j, k]) / ell[k]
                o[i, j] = exp(-acc)
    elif nu_code == 1:
        for i in range(na):
            for j in range(nb):
                acc = 0.0
                acc2 = 0.0
                for k in range(d):
                    s = s3 * fabs(xa[i, k] - xb[j, k]) / ell[k]
                    acc += s
                    acc2 += log1p(s)
                o[i, j] = exp(acc2 - acc)
    else:
        for i in range(na):
            for j in range(nb):
                acc = 0.0
                for k in range(d):
                    r = (xa[i, k] - xb[j, k]) / ell[k]
                    acc += r * r
                o[i, j] = exp(-0.5 * acc)
    return out
