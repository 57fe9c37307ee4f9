"""Build script for the optional compiled scan kernel.

The package works without the extension (a pure-PyTorch fallback is selected
at import time); building it just makes the recurrent directional scans fast.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "cloudgan._scan",
        sources=["src/cloudgan/_scan.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # -ffp-contract=off keeps the kernel bit-compatible with the torch
        # fallback (no FMA fusion of x + w*h).
        extra_compile_args=["-O3", "-ffp-contract=off"],
        optional=True,
    )
]

setup(ext_modules=cythonize(extensions, language_level="3"))
