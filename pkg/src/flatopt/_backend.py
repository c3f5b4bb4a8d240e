"""Kernel backend selection.

The compiled extension is preferred when it was built; setting the
environment variable FLATOPT_PURE_PYTHON=1 forces the pure-Python twin
(the backend-equivalence tests and the benchmark use this).
"""

import os

if os.environ.get("FLATOPT_PURE_PYTHON", "") == "1":
    from . import _kernels_py as kernels
else:
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from . import _kernels_py as kernels

BACKEND = kernels.BACKEND
lu_solve = kernels.lu_solve
rk_combine = kernels.rk_combine
error_norm = kernels.error_norm
