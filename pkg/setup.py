"""Build hook for the optional compiled kernels.

The pure-Python fallback in ``kinpara._pykernels`` is used whenever the
extension is missing, so a failed compile does not break installation.
"""
import os

import numpy as np
from setuptools import Extension, setup

ext_modules = []
if os.environ.get("KINPARA_NO_EXT", "") != "1":
    try:
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "kinpara._ckernels",
                    ["src/kinpara/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )
    except ImportError:
        ext_modules = []

setup(ext_modules=ext_modules)
