"""Builds the Rust extension with cargo directly.

Neither maturin nor setuptools-rust is assumed; plain setuptools invokes
`cargo build --release` and copies the cdylib to wherever build_ext wants
the extension module (site-packages for wheels, the source tree for
editable installs).
"""

import json
import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

CRATE_DIR = Path(__file__).resolve().parent


class CargoExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class cargo_build_ext(build_ext):
    def build_extension(self, ext):
        subprocess.run(
            ["cargo", "build", "--release", "-p", "stokesfit-py"],
            check=True,
            cwd=CRATE_DIR,
        )
        meta = subprocess.run(
            ["cargo", "metadata", "--format-version", "1", "--no-deps"],
            check=True,
            cwd=CRATE_DIR,
            capture_output=True,
        )
        target = Path(json.loads(meta.stdout)["target_directory"])
        if sys.platform == "win32":
            built = target / "release" / "_native.dll"
        elif sys.platform == "darwin":
            built = target / "release" / "lib_native.dylib"
        else:
            built = target / "release" / "lib_native.so"
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(built, dest)


setup(
    ext_modules=[CargoExtension("stokesfit._native")],
    cmdclass={"build_ext": cargo_build_ext},
)
