"""Builds the optional compiled solver kernel.

The package is fully functional without it (a numpy fallback is selected at
import time), so the extension build is best-effort: no Cython, no compiler,
or PHASETRACK_NO_EXT=1 all simply skip it.
"""

import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("PHASETRACK_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "phasetrack._kernels",
                    ["src/phasetrack/_kernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
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
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
