"""Build script: compiles the optional Cython Gram-matrix extension.

If Cython or a C compiler is unavailable the package still installs and
falls back to the pure-NumPy kernel backend at import time.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools.extension import Extension

    ext_modules = cythonize(
        [
            Extension(
                "hrtfgp._gram_cy",
                ["src/hrtfgp/_gram_cy.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
            )
        ],
        language_level=3,
    )
except Exception as exc:  # pragma: no cover - build environment dependent
    print(f"hrtfgp: building without compiled extension ({exc})")

setup(ext_modules=ext_modules)
