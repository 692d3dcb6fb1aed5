"""Build script: compiles the ADMM hot-loop kernel as a Cython extension.

The extension is optional.  If compilation fails (no compiler, no Cython),
the package installs anyway and `sasa` falls back to the pure-NumPy kernel
at import time.
"""

import sys

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the extension if possible, warn and continue otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"WARNING: building sasa._kernels failed ({exc}); "
                  "the pure-Python kernel will be used.", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # pragma: no cover - toolchain dependent
            print(f"WARNING: building {ext.name} failed ({exc}); "
                  "the pure-Python kernel will be used.", file=sys.stderr)


def extensions():
    try:
        import numpy as np
        from Cython.Build import cythonize
        from setuptools import Extension
    except ImportError:  # pragma: no cover - toolchain dependent
        return []
    ext = Extension(
        "sasa._kernels",
        ["src/sasa/_kernels.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize([ext], language_level="3")


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
