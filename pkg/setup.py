"""Build script for the optional compiled kernel core.

The package is fully functional without the extension: ``uqkit._backend``
falls back to the numpy implementations in ``uqkit._kernels_py`` when the
compiled module is missing (or when UQKIT_PURE_PYTHON=1).
"""

import numpy
from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the Cython core if possible, install pure-Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            print(f"warning: compiled kernels skipped ({exc}); "
                  "using pure-Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); "
                  "using pure-Python fallback")


def extensions():
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    return cythonize(
        "src/uqkit/_kernels_cy.pyx",
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    )


setup(
    ext_modules=extensions(),
    include_dirs=[numpy.get_include()],
    cmdclass={"build_ext": OptionalBuildExt},
)
