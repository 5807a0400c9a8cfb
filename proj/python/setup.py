# The native extension links against the geopatch library; point
# GEOPATCH_BUILD_DIR at a CMake build tree of the main project.
import os
from pathlib import Path

from pybind11.setup_helpers import Pybind11Extension
from setuptools import setup

root = Path(__file__).resolve().parent.parent
build = Path(os.environ.get("GEOPATCH_BUILD_DIR", root / "build"))

setup(
    ext_modules=[
        Pybind11Extension(
            "geopatch_reader._native",
            ["src/reader_module.cpp"],
            include_dirs=[str(root / "include")],
            library_dirs=[str(build)],
            libraries=["geopatch", "lmdb", "tiff", "crypto", "fmt", "spdlog"],
            cxx_std=20,
        )
    ],
)
