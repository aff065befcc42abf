from setuptools import Extension, setup

try:
    import numpy as np
    from Cython.Build import cythonize

    extensions = cythonize(
        [
            Extension(
                "foxli._kernels",
                ["src/foxli/_kernels.pyx"],
                include_dirs=[np.get_include()],
                # Skip the C99 inf/nan-recovering complex multiply calls;
                # the integrator state is finite by construction.
                extra_compile_args=["-O3", "-fcx-limited-range"],
            )
        ],
        language_level="3",
    )
except ImportError:
    # Pure-Python install; foxli.integrate falls back to the numpy kernel.
    extensions = []

setup(ext_modules=extensions)
