import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "heavylocal._kernels",
    ["src/heavylocal/_kernels.pyx"],
    include_dirs=[np.get_include()],
    extra_compile_args=["-O2", "-ffp-contract=off"],
)

setup(ext_modules=cythonize([ext], language_level=3))
