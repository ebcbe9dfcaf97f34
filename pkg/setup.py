"""Build script for the optional compiled kernels.

The package works without them; ``epdp.kernels`` falls back to the numpy
implementation when the extension is missing.
"""
import os

from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("EPDP_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "epdp._ckernels",
                ["src/epdp/_ckernels.pyx"],
                include_dirs=[np.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3", "-ffp-contract=off"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
