"""Build script: compiles the Cython FEM kernels when a toolchain is available.

The package works without the extension (a numpy fallback is selected at
import time), so any failure here is demoted to a warning rather than
aborting the install.
"""

import warnings

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "retractlab.fem._kernels",
                sources=["src/retractlab/fem/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": 3},
    )
except Exception as exc:  # pragma: no cover - toolchain-dependent
    warnings.warn(f"Cython kernels not built ({exc}); using the numpy backend.")

setup(ext_modules=ext_modules)
