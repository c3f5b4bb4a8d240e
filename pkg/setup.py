"""Build script.  Compiles the optional Cython kernel extension.

The package works without the extension (a pure-Python twin of the
kernels is selected at import time), so a failed compile downgrades to
a warning instead of aborting the install.
"""

import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "flatopt._kernels",
                ["src/flatopt/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except Exception as exc:  # pragma: no cover - build-environment dependent
    import warnings

    warnings.warn(f"skipping compiled kernels ({exc}); pure-Python backend will be used")
    extensions = []

setup(ext_modules=extensions)
