"""Build script. The compiled simulation kernel is optional: when Cython or a
C compiler is unavailable the package installs pure-Python and selects the
numpy fallback at import time."""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Degrade to a pure-Python install instead of failing the build."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:
            print(f"compiled kernel skipped ({exc}); using pure-Python backend")

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            print(f"compiled kernel skipped ({exc}); using pure-Python backend")


ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "resilkit._sim._fast",
                ["src/resilkit/_sim/_fast.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    print("Cython not available; using pure-Python backend")

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
