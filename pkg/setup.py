"""Build script for the optional compiled attention kernel.

The package is fully functional without the extension; tempora.temporal
falls back to a pure-numpy kernel when the import fails. Building from
source only needs Cython and a C compiler.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "tempora._kernels",
                ["src/tempora/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
