import os

from setuptools import Extension, setup

ext_modules = []
if not os.environ.get("PDMPJUMP_NO_EXT"):
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        # the package falls back to its numpy kernels
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "pdmpjump._core",
                    ["src/pdmpjump/_core.pyx"],
                    include_dirs=[np.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
