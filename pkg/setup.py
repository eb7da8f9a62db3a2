import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-Python install; asmf.kernels falls back to numpy
    cythonize = None

extensions = []
if cythonize is not None and not os.environ.get("ASMF_NO_EXTENSIONS"):
    extensions = cythonize(
        [
            Extension(
                "asmf._kernels",
                ["src/asmf/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-fno-fast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions)
