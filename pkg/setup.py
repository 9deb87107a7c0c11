"""Builds the optional compiled kernel extension.

The package works without the extension (pure-Python kernels are selected at
import time), so compilation failures are non-fatal: set SIMRAG_SKIP_NATIVE=1
or build without Cython to get a pure-Python install.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("SIMRAG_SKIP_NATIVE") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [Extension("simrag.kernels._native", ["src/simrag/kernels/_native.pyx"])],
            language_level="3",
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
