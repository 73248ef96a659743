"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a numpy fallback is
selected at import time); the build is marked optional so installation
never fails on a machine without a compiler.

    pip install -e . --no-build-isolation
    python setup.py build_ext --inplace   # rebuild just the extension
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

if cythonize is not None:
    extensions = cythonize(
        [
            Extension(
                "dtadyn.kernels._ckernels",
                ["src/dtadyn/kernels/_ckernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )
else:
    extensions = []

setup(ext_modules=extensions)
