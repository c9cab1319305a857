import sys

from setuptools import setup

try:
    from Cython.Build import cythonize
except ImportError:
    print("cython not found, installing the pure-python backend only", file=sys.stderr)
    ext_modules = []
else:
    ext_modules = cythonize(
        ["src/rotamix/_kernels.pyx"],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
