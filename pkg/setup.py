"""Build script for the optional compiled stencil kernels.

The package works without the extension (a vectorized numpy fallback is
selected at import time); building it just makes the solver's inner loops
cheaper.  Floating-point contraction is disabled so the compiled kernels
return bit-identical results to the fallback.
"""
import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "cmalab.kernels._core",
                ["src/cmalab/kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffp-contract=off"],
            )
        ],
        language_level=3,
    )
else:
    extensions = []

setup(ext_modules=extensions)
