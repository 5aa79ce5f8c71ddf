import numpy
from setuptools import Extension, setup
from Cython.Build import cythonize

# -ffp-contract=off keeps the compiled Gibbs sweep bit-identical to the
# pure-Python fallback (no FMA contraction of a*b+c).
ext_modules = cythonize(
    [
        Extension(
            "metabench._kernels",
            ["src/metabench/_kernels.pyx"],
            include_dirs=[numpy.get_include()],
            extra_compile_args=["-O2", "-ffp-contract=off"],
        )
    ],
    compiler_directives={"language_level": "3"},
)

setup(ext_modules=ext_modules)
