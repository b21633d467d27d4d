"""Build script: compiles the optional C kernel extension.

The package works without the extension (a pure-Python fallback with the
same numerics is selected at import time), so the extension is marked
optional and a failed compile only degrades performance.

Set GNM_PURE_PYTHON=1 to skip the extension entirely.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("GNM_PURE_PYTHON") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "gnm._kernels._ckernels",
                    ["src/gnm/_kernels/_ckernels.pyx"],
                    # -ffp-contract=off keeps mul/add rounding identical to the
                    # pure-Python backend so both produce bit-equal results.
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                    optional=True,
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
