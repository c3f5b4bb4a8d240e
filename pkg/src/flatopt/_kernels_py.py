"""Pure-Python arithmetic kernels.

Twin of the compiled extension in ``_kernels.pyx``; ``_backend`` picks
one of the two at import time.  The implementations must stay
numerically interchangeable, so any change here needs a matching change
in the .pyx file.
"""

import numpy as np

from .errors import SingularMatrix

BACKEND = "python"

_PIVOT_TOL = 1e-12


def lu_solve(a, b):
    """Solve a @ x = b by LU with partial pivoting.

    One fixed iterative-refinement pass follows the triangular solves,
    which keeps the residual at roundoff level even near condition
    number 1e6.  Raises SingularMatrix when a pivot magnitude falls
    below 1e-12.
    """
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    n = a.shape[0]
    lu = a.copy()
    piv = np.arange(n)
    for col in range(n):
        p = col + int(np.argmax(np.abs(lu[col:, col])))
        if abs(lu[p, col]) < _PIVOT_TOL:
            raise SingularMatrix(f"pivot magnitude below {_PIVOT_TOL:g} in column {col}")
        if p != col:
            lu[[col, p]] = lu[[p, col]]
            piv[[col, p]] = piv[[p, col]]
        lu[col + 1:, col] /= lu[col, col]
        lu[col + 1:, col + 1:] -= np.outer(lu[col + 1:, col], lu[col, col + 1:])
    x = _backsolve(lu, piv, b)
    r = b - a @ x
    return x + _backsolve(lu, piv, r)


def _backsolve(lu, piv, b):
    n = lu.shape[0]
    x = b[piv].astype(float)
    for i in range(1, n):
        x[i] -= lu[i, :i] @ x[:i]
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - lu[i, i + 1:] @ x[i + 1:]) / lu[i, i]
    return x


def rk_combine(y, h, k_stack, coeffs):
    """Return y + h * sum_j coeffs[j] * k_stack[j]."""
    y = np.asarray(y, dtype=float)
    k_stack = np.asarray(k_stack, dtype=float)
    coeffs = np.asarray(coeffs, dtype=float)
    return y + h * (coeffs @ k_stack)


def error_norm(y_old, y_new, delta, abs_tol, rel_tol):
    """RMS of delta measured against the per-component tolerance scale."""
    y_old = np.asarray(y_old, dtype=float)
    y_new = np.asarray(y_new, dtype=float)
    delta = np.asarray(delta, dtype=float)
    sc = abs_tol + rel_tol * np.maximum(np.abs(y_old), np.abs(y_new))
    return float(np.sqrt(np.mean((delta / sc) ** 2)))
