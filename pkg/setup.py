import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# Set SUPERBPD_NO_EXT=1 to install the pure-Python kernels only.
if os.environ.get("SUPERBPD_NO_EXT"):
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "superbpd._core",
                ["src/superbpd/_core.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                # no FMA contraction: compiled and numpy kernels must agree bit for bit
                extra_compile_args=["-O3", "-ffp-contract=off", "-fopenmp"],
                extra_link_args=["-fopenmp"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
