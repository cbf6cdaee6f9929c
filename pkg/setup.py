"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a pure numpy
fallback is selected at import time), so a failed compile only warns.
Set CFTALIGN_NO_EXT=1 to skip the extension build entirely.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that degrades to the pure-python backend on failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, etc.
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            "WARNING: building cftalign.kernels._ckernels failed (%s); "
            "the pure numpy kernel backend will be used." % exc,
            file=sys.stderr,
        )


ext_modules = []
if os.environ.get("CFTALIGN_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize

        ext_modules = cythonize(
            [
                Extension(
                    "cftalign.kernels._ckernels",
                    sources=["src/cftalign/kernels/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                    extra_compile_args=["-O3"],
                )
            ],
            compiler_directives={
                "language_level": "3",
                "boundscheck": False,
                "wraparound": False,
                "cdivision": True,
            },
            quiet=True,
        )
    except ImportError as exc:
        optional_build_ext._warn(exc)

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
