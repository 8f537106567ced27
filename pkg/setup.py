"""Builds the optional Cython kernels; the package still works without them."""

import os

from setuptools import setup

ext_modules = []
if not os.environ.get("PCPQ_NO_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("pcpq._kernels", ["src/pcpq/_kernels.pyx"],
                       include_dirs=[numpy.get_include()],
                       extra_compile_args=["-O3", "-ffp-contract=off"])],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
