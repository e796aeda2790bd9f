"""Build script for the compiled scan kernel.

The pure-numpy fallback in ssdi.ssm keeps the package usable when the
extension cannot be built; install still fails loudly on compiler errors
so a broken toolchain is not silently papered over.
"""

import numpy
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "ssdi.ssm._scan_cy",
        ["src/ssdi/ssm/_scan_cy.pyx"],
        include_dirs=[numpy.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(ext_modules=cythonize(extensions, compiler_directives={"language_level": "3"}))
