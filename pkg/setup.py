"""Build script: compiles the range coder extension when Cython and a C
compiler are available. Installation falls back to the pure-Python coder
otherwise; tvc.rangecoder picks the backend at import time."""

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [Extension("tvc.rangecoder._core", ["src/tvc/rangecoder/_core.pyx"])],
        language_level="3",
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
