from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension("regsir._kernels", ["src/regsir/_kernels.pyx"], optional=True),
]

setup(ext_modules=cythonize(extensions, language_level=3))
