"""Build script for the optional compiled kernel.

The package works without the extension (a pure-Python fallback is selected
at import time), so the extension is marked optional: a failed compile
downgrades to the fallback instead of breaking the install.
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
                "monoseq.pcrf._kernels",
                ["src/monoseq/pcrf/_kernels.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )

setup(ext_modules=ext_modules)
