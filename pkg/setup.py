"""Build script: compiles the optional fast-kernel extension when a toolchain
is available.  The package is fully functional without it (numpy fallback is
selected at import), so any build failure here downgrades to a warning."""

import warnings

from setuptools import Extension, setup


def _extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        warnings.warn("Cython/numpy unavailable at build time; "
                      "skipping compiled kernels (numpy fallback will be used)")
        return []
    ext = Extension(
        "stua._kernels._ckern",
        ["src/stua/_kernels/_ckern.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
