# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled arithmetic kernels.

Twin of ``_kernels_py.py``; keep the two numerically interchangeable
(same pivoting rule, same refinement pass, same tolerance scale).
"""

import numpy as np

from libc.math cimport fabs, sqrt

from .errors import SingularMatrix

BACKEND = "cython"

cdef double _PIVOT_TOL = 1e-12


def lu_solve(a, b):
    """Solve a @ x = b by LU with partial pivoting.

    One fixed iterative-refinement pass follows the triangular solves,
    which keeps the residual at roundoff level even near condition
    number 1e6.  Raises SingularMatrix when a pivot magnitude falls
    below 1e-12.
    """
    a_arr = np.ascontiguousarray(a, dtype=np.float64)
    b_arr = np.ascontiguousarray(b, dtype=np.float64)
    lu = a_arr.copy()
    cdef Py_ssize_t n = lu.shape[0]
    piv = np.arange(n, dtype=np.intp)
    _factor(lu, piv, n)
    x = _backsolve(lu, piv, b_arr, n)
    r = b_arr - a_arr @ x
    return x + _backsolve(lu, piv, r, n)


cdef int _factor(double[:, ::1] lu, Py_ssize_t[::1] piv, Py_ssize_t n) except -1:
    cdef Py_ssize_t col, i, j, p, tmp
    cdef double best, mag, fac, pivot
    for col in range(n):
        p = col
        best = fabs(lu[col, col])
        for i in range(col + 1, n):
            mag = fabs(lu[i, col])
            if mag > best:
                best = mag
                p = i
        if best < _PIVOT_TOL:
            raise SingularMatrix(f"pivot magnitude below {_PIVOT_TOL:g} in column {col}")
        if p != col:
            for j in range(n):
                fac = lu[col, j]
                lu[col, j] = lu[p, j]
                lu[p, j] = fac
            tmp = piv[col]
            piv[col] = piv[p]
            piv[p] = tmp
        pivot = lu[col, col]
        for i in range(col + 1, n):
            fac = lu[i, col] / pivot
            lu[i, col] = fac
            for j in range(col + 1, n):
                lu[i, j] -= fac * lu[col, j]
    return 0


cdef _backsolve(double[:, ::1] lu, Py_ssize_t[::1] piv, double[::1] b, Py_ssize_t n):
    x_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] x = x_arr
    cdef Py_ssize_t i, j
    cdef double acc
    for i in range(n):
        x[i] = b[piv[i]]
    for i in range(1, n):
        acc = x[i]
        for j in range(i):
            acc -= lu[i, j] * x[j]
        x[i] = acc
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for j in range(i + 1, n):
            acc -= lu[i, j] * x[j]
        x[i] = acc / lu[i, i]
    return x_arr


def rk_combine(y, h, k_stack, coeffs):
    """Return y + h * sum_j coeffs[j] * k_stack[j]."""
    y_arr = np.ascontiguousarray(y, dtype=np.float64)
    k_arr = np.ascontiguousarray(k_stack, dtype=np.float64)
    c_arr = np.ascontiguousarray(coeffs, dtype=np.float64)
    out = np.empty_like(y_arr)
    cdef double[::1] yv = y_arr
    cdef double[::1] cv = c_arr
    cdef double[::1] ov = out
    cdef double[:, ::1] kv = k_arr
    cdef Py_ssize_t nst = c_arr.shape[0]
    cdef Py_ssize_t n = y_arr.shape[0]
    cdef double hh = h
    cdef double acc
    cdef Py_ssize_t i, j
    for i in range(n):
        acc = 0.0
        for j in range(nst):
            acc += cv[j] * kv[j, i]
        ov[i] = yv[i] + hh * acc
    return out


def error_norm(y_old, y_new, delta, abs_tol, rel_tol):
    """RMS of delta measured against the per-component tolerance scale."""
    cdef double[::1] yo = np.ascontiguousarray(y_old, dtype=np.float64)
    cdef double[::1] yn = np.ascontiguousarray(y_new, dtype=np.float64)
    cdef double[::1] dv = np.ascontiguousarray(delta, dtype=np.float64)
    cdef double atol = abs_tol
    cdef double rtol = rel_tol
    cdef Py_ssize_t n = yo.shape[0]
    cdef Py_ssize_t i
    cdef double acc = 0.0
    cdef double sc, am, bm, q
    for i in range(n):
        am = fabs(yo[i])
        bm = fabs(yn[i])
        sc = atol + rtol * (am if am > bm else bm)
        q = dv[i] / sc
        acc += q * q
    return sqrt(acc / n)
