"""Build script for the optional compiled reduction kernels.

The extension is a convenience, not a requirement: if Cython or a C
compiler is missing the install still succeeds and the package falls
back to the pure NumPy kernels at import time.
"""

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """Swallow compiler failures so the pure-Python install survives."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernels skipped ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: building {ext.name} failed ({exc}); "
                  "falling back to pure NumPy kernels")


def make_extensions():
    import numpy as np
    from Cython.Build import cythonize

    extensions = [
        Extension(
            "fedwatch._kernels",
            ["src/fedwatch/_kernels.pyx"],
            include_dirs=[np.get_include()],
            # -ffp-contract=off: no FMA contraction, so the compiled
            # left-to-right loops stay bitwise-identical to the NumPy
            # fallback path.
            extra_compile_args=["-O3", "-ffp-contract=off"],
            define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        )
    ]
    return cythonize(extensions, compiler_directives={"language_level": "3"})


try:
    ext_modules = make_extensions()
except Exception as exc:  # noqa: BLE001
    print(f"warning: Cython unavailable ({exc}); installing pure-Python only")
    ext_modules = []

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
