import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize

    USE_CYTHON = True
except ImportError:
    USE_CYTHON = False

ext = ".pyx" if USE_CYTHON else ".c"

extensions = [
    Extension(
        "schrochaos._kernels",
        sources=["src/schrochaos/_kernels" + ext],
    )
]

if USE_CYTHON:
    extensions = cythonize(extensions, language_level=3)
elif not os.path.exists("src/schrochaos/_kernels.c"):
    # No Cython and no pre-generated C source: ship pure Python only.
    extensions = []


class optional_build_ext(build_ext):
    """Build the accelerator if possible, fall back to pure Python otherwise."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:
            print("warning: C extension build failed (%s); "
                  "using the pure Python backend" % (exc,))

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            print("warning: building %s failed (%s); "
                  "using the pure Python backend" % (ext.name, exc))


setup(
    ext_modules=extensions,
    cmdclass={"build_ext": optional_build_ext},
)
