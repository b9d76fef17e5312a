"""Build script: compiles the optional accelerator extension.

The package works without the extension (a pure-Python backend is selected at
import time); the extension is marked optional so a missing C++ toolchain does
not break installation.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("CIRCUITKERNELS_PURE", "0") != "1":
    try:
        from Cython.Build import cythonize

        ext = Extension(
            "circuitkernels._core._fastcore",
            ["src/circuitkernels/_core/_fastcore.pyx"],
            language="c++",
            extra_compile_args=["-O2", "-std=c++11"],
            optional=True,
        )
        ext_modules = cythonize([ext], language_level=3)
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
