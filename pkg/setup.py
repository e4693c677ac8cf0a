import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

ext = Extension(
    "nbfi._simcore",
    ["src/nbfi/_simcore.pyx"],
    include_dirs=[numpy.get_include()],
    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    # no FMA contraction: keeps results bit-identical to the Python kernel
    extra_compile_args=["-O2", "-ffp-contract=off"],
)

setup(ext_modules=cythonize([ext], language_level=3))
