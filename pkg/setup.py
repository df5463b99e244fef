"""Build script for the optional compiled core.

The package works without the extension; ``hydrovrb.kernels`` falls back to
the pure-Python implementation when ``hydrovrb._core`` cannot be imported.
"""
import os

from setuptools import setup

ext_modules = []
if os.environ.get("HYDROVRB_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "hydrovrb._core",
                    ["src/hydrovrb/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
        )

setup(ext_modules=ext_modules)
