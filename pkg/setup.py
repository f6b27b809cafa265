import os
import sys

import numpy as np
from setuptools import Extension, setup


def _extensions():
    if os.environ.get("MPINODE_PURE_PYTHON") == "1":
        return []
    try:
        from Cython.Build import cythonize
    except ImportError:
        return []
    compile_args = ["-O3"]
    libraries = []
    macros = []
    if sys.platform.startswith("linux") and os.environ.get("MPINODE_PORTABLE") != "1":
        # vectorized tanh from glibc's libmvec
        compile_args += ["-march=native", "-fopenmp-simd"]
        libraries.append("mvec")
        macros.append(("MPINODE_LIBMVEC", "1"))
    ext = Extension(
        "mpinode.solver._ccore",
        ["src/mpinode/solver/_ccore.pyx", "src/mpinode/solver/_vmath.c"],
        include_dirs=[np.get_include(), "src/mpinode/solver"],
        extra_compile_args=compile_args,
        libraries=libraries,
        define_macros=macros,
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=_extensions())
