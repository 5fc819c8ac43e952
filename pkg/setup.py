import os
import warnings

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Build the Cython core when possible; fall back to pure Python otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing, etc.
            warnings.warn(f"occvdb: compiled core not built ({exc}); using pure-Python kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            warnings.warn(f"occvdb: failed to build {ext.name} ({exc}); using pure-Python kernels")


ext_modules = []
if not os.environ.get("OCCVDB_NO_EXT"):
    try:
        from Cython.Build import cythonize
    except ImportError:
        warnings.warn("occvdb: Cython not available; skipping compiled core")
    else:
        ext_modules = cythonize(
            [Extension("occvdb._core", ["src/occvdb/_core.pyx"], extra_compile_args=["-O3"])],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules, cmdclass={"build_ext": OptionalBuildExt})
