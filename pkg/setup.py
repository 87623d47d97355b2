import os

import numpy as np
from setuptools import Extension, setup

# The compiled kernels are optional: the package falls back to the numpy
# implementation in hashlab._kernels._fallback when the extension is
# missing.  Set HASHLAB_NO_EXT=1 to skip building it.
ext_modules = []
if not os.environ.get("HASHLAB_NO_EXT"):
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "hashlab._kernels._core",
                    ["src/hashlab/_kernels/_core.pyx"],
                    include_dirs=[np.get_include()],
                )
            ],
            language_level=3,
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
