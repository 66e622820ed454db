"""Build script: compiles the optional geometry speedup extension.

The extension is a pure optimization; if Cython or a C compiler is
missing the install proceeds and the package falls back to the
pure-Python kernels at import time.
"""

import sys

from setuptools import setup

ext_modules = []
try:
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/multigrain/_speedups.pyx"],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build-env dependent
    sys.stderr.write(f"multigrain: skipping compiled kernels ({exc})\n")

setup(ext_modules=ext_modules)
