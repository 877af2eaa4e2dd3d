"""Build script.

The package works without compilation; the extension module only speeds up
tree growth.  Set BUILDTRIAGE_PURE=1 to skip the compile entirely, and any
build failure downgrades to the pure-Python kernel instead of aborting the
install.
"""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class _OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # missing compiler, header mismatch, ...
            print(f"warning: skipping compiled kernel ({exc}); "
                  "falling back to the pure-Python tree grower")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: could not build {ext.name} ({exc}); "
                  "falling back to the pure-Python tree grower")


def _extensions():
    if os.environ.get("BUILDTRIAGE_PURE") == "1":
        return []
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    ext = Extension(
        "buildtriage.forest._grow_cy",
        ["src/buildtriage/forest/_grow_cy.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
    return cythonize(
        [ext],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
        },
    )


setup(ext_modules=_extensions(), cmdclass={"build_ext": _OptionalBuildExt})
