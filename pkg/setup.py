"""Builds the optional compiled kernel extension.

The package works without it (a pure-numpy fallback is selected at import);
set TAGTRACK_NO_EXT=1 to skip the build explicitly.
"""
import os

from setuptools import setup
from setuptools.extension import Extension

ext_modules = []
if os.environ.get("TAGTRACK_NO_EXT") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "tagtrack._kernels",
                    ["src/tagtrack/_kernels.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
