import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "mixcast._fast._kernels",
                ["src/mixcast/_fast/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    # Pure-python fallback kernels are selected at import time when the
    # compiled extension is unavailable.
    ext_modules = []

setup(ext_modules=ext_modules)
