import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "qdcascade._corr",
        ["src/qdcascade/_corr.pyx"],
        include_dirs=[np.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3"],
        # the package falls back to the numpy implementation when the
        # compiled module is unavailable, so a failed build is not fatal
        optional=True,
    )
]

if cythonize is not None:
    extensions = cythonize(
        extensions, compiler_directives={"language_level": 3, "embedsignature": True}
    )
else:
    extensions = []

setup(ext_modules=extensions)
