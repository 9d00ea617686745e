import os

import numpy as np
from setuptools import Extension, setup

try:
    if not os.path.exists("src/tetray/_kernels.pyx"):
        raise ImportError("no kernel source")
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "tetray._kernels",
                ["src/tetray/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # -ffp-contract=off: the compiled kernels must round every
                # float32 operation so results stay bit-identical to the
                # pure-python fallback.
                extra_compile_args=["-O3", "-ffp-contract=off"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                optional=True,
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython: install with the pure-python kernels only.
    ext_modules = []

setup(ext_modules=ext_modules)
