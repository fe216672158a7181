"""CMake-driven extension build; all compile logic lives in CMakeLists.txt."""

import shutil
import subprocess
import sys
from pathlib import Path

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class CMakeExtension(Extension):
    def __init__(self, name):
        super().__init__(name, sources=[])


class CMakeBuild(build_ext):
    def build_extension(self, ext):
        source_dir = Path(__file__).resolve().parent
        build_dir = Path(self.build_temp).resolve() / "cmake"
        build_dir.mkdir(parents=True, exist_ok=True)

        subprocess.run(
            [
                "cmake",
                "-S", str(source_dir),
                "-B", str(build_dir),
                "-DCMAKE_BUILD_TYPE=Release",
                "-DGSFDA_BUILD_TESTS=OFF",
                f"-DPython3_EXECUTABLE={sys.executable}",
            ],
            check=True,
        )
        subprocess.run(
            ["cmake", "--build", str(build_dir), "--target", "_core", "-j"],
            check=True,
        )

        # CMake stages the module under <build>/python/gsfda; copy it to
        # wherever setuptools wants this extension (wheel dir or, for
        # editable installs, the source tree).
        staged = sorted((build_dir / "python" / "gsfda").glob("_core.*"))
        if not staged:
            raise RuntimeError("CMake did not produce the _core module")
        dest = Path(self.get_ext_fullpath(ext.name))
        dest.parent.mkdir(parents=True, exist_ok=True)
        shutil.copy2(staged[0], dest)


setup(
    ext_modules=[CMakeExtension("gsfda._core")],
    cmdclass={"build_ext": CMakeBuild},
)
