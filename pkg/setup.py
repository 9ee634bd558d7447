import numpy as np
from setuptools import Extension, setup

# The compiled kernel extension is optional: if Cython or a C compiler is
# missing the package falls back to the pure-numpy kernels at import time.
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "z2spinor._kernels",
                ["src/z2spinor/_kernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
        annotate=False,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
