"""Build script: compiles the optional Cython kernel module.

The package works without the extension (a pure-Python backend is
selected at import time), so any failure here should not block the
install.  Building is attempted whenever Cython and numpy are present.
"""

import os

from setuptools import Extension, setup

PYX = "src/phylocomb/_backend/_speed.pyx"

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = None

if ext_modules is None and not os.path.exists(PYX):
    ext_modules = []
if ext_modules is None:
    ext_modules = cythonize(
        [
            Extension(
                "phylocomb._backend._speed",
                [PYX],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                language="c",
            )
        ],
        compiler_directives={"language_level": 3},
    )

setup(ext_modules=ext_modules)
