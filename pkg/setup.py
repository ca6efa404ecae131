import os

import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pure-python install
    cythonize = None

ext_modules = []
if cythonize is not None and not os.environ.get("SOQDYN_NO_EXT"):
    ext_modules = cythonize(
        [
            Extension(
                "soqdyn._kernels._ckernels",
                ["src/soqdyn/_kernels/_ckernels.pyx"],
                include_dirs=[numpy.get_include()],
                # keep IEEE semantics identical to the numpy fallback
                extra_compile_args=["-O2", "-ffp-contract=off", "-fno-fast-math"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
