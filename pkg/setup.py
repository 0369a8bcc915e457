from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "artigraph._kernels._core",
                ["src/artigraph/_kernels/_core.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except ImportError:
    # No Cython at build time: install pure-Python; the kernel selector in
    # artigraph._kernels falls back to the NumPy implementations.
    ext_modules = []

setup(ext_modules=ext_modules)
