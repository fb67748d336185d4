"""Build script for the optional compiled event kernel.

The package is fully functional without the extension (a pure-Python twin of
the kernel is selected at import time), so a failed build is a warning, not
an error.
"""

import warnings

from setuptools import Extension, setup

extensions = []
try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "aimdalloc._kernel",
                ["src/aimdalloc/_kernel.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    warnings.warn("Cython not available; installing without the compiled event kernel")

setup(ext_modules=extensions)
