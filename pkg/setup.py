"""Builds the optional compiled kernels; the package works without them."""
from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    def run(self):
        try:
            super().run()
        except Exception as exc:  # no compiler or Cython: fall back to pure Python
            print(f"warning: compiled kernels not built ({exc}); using pure-Python kernels")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} not built ({exc}); using pure-Python kernels")


def extensions():
    try:
        import numpy
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension
    return cythonize([Extension("ranmaze._ckernels", ["src/ranmaze/_ckernels.pyx"],
                                include_dirs=[numpy.get_include()],
                                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")])],
                     language_level=3)


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
