import os

from setuptools import setup

ext_modules = []
if os.environ.get("SOVERCLAIM_PURE") != "1":
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "soverclaim.storage._gf256",
                    ["src/soverclaim/storage/_gf256.pyx"],
                    extra_compile_args=["-O3"],
                )
            ],
            language_level="3",
        )
    except ImportError:
        # No Cython: install with the pure-Python kernel only.
        ext_modules = []

setup(ext_modules=ext_modules)
