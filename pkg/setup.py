"""Builds the optional compiled convolution kernels.

The package works without the extension: sigweave.nn.kernels falls back to a
pure-numpy implementation when the import of the compiled module fails.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "sigweave.nn.kernels._native",
    ["src/sigweave/nn/kernels/_native.pyx"],
    include_dirs=[np.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
)

setup(ext_modules=cythonize(ext, language_level="3"))
