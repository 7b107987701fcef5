from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "rotapath._kernels",
                ["src/rotapath/_kernels.pyx"],
                extra_compile_args=["-O3"],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

# The package is fully functional without the extension: rotapath.kernels
# falls back to the numpy implementation when the import fails.
setup(ext_modules=ext_modules)
