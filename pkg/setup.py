import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

openmp = [] if os.environ.get("SGIMC_NO_OPENMP") else ["-fopenmp"]


class OptionalBuildExt(build_ext):
    """Build the compiled kernels if possible; the numpy fallback covers failures."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001 - any toolchain failure
            print(f"warning: compiled kernels not built ({exc}); using numpy fallback",
                  file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: {ext.name} not built ({exc}); using numpy fallback",
                  file=sys.stderr)


def _extensions():
    if os.environ.get("SGIMC_PURE_PYTHON"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        print("warning: Cython or numpy missing at build time; using numpy fallback",
              file=sys.stderr)
        return []
    ext = Extension(
        "sgimc._ckernels",
        ["src/sgimc/_ckernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"] + openmp,
        extra_link_args=openmp,
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions(), cmdclass={"build_ext": OptionalBuildExt})
