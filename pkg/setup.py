import os

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

# OpenMP is optional: the kernels fall back to serial loops when it is
# unavailable (e.g. clang without libomp).
compile_args = ["-O3"]
link_args = []
if os.environ.get("TEXTSPLAT_NO_OPENMP") != "1":
    compile_args.append("-fopenmp")
    link_args.append("-fopenmp")

extensions = [
    Extension(
        "textsplat.splat._kernels",
        ["src/textsplat/splat/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=compile_args,
        extra_link_args=link_args,
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3", "boundscheck": False, "wraparound": False},
    )
)
