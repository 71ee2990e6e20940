"""Build the optional compiled kernel; the package works without it."""

import os

import numpy as np
from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    npy_lib = os.path.join(np.get_include(), "..", "..", "random", "lib")
    ext_modules = cythonize(
        [
            Extension(
                "arctanlaw._kernels",
                ["src/arctanlaw/_kernels.pyx"],
                include_dirs=[np.get_include()],
                library_dirs=[npy_lib],
                libraries=["npyrandom"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": 3},
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
