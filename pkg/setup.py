"""Build script for the optional compiled integrator kernel.

The package works without the extension: if Cython or a C compiler is
missing, the build falls back to the pure-Python integrator path.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("KANESIM_NO_EXT", "") != "1":
    try:
        import numpy as np
        import scipy  # noqa: F401  (the kernel cimports scipy's BLAS wrappers)
        from Cython.Build import cythonize
        from setuptools import Extension

        extensions = [
            Extension(
                "kanesim._rkcore",
                ["src/kanesim/_rkcore.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"],
            )
        ]
        ext_modules = cythonize(
            extensions,
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
