"""Makes the package importable without an installed wheel.

When TSGAN_CORE_MODULE points at a CMake-built extension, load it as
tsgan._core and put python/ on the path; an installed package wins otherwise.
"""

import importlib.util
import os
import pathlib
import sys

_root = pathlib.Path(__file__).resolve().parents[2]
_ext = os.environ.get("TSGAN_CORE_MODULE")
if _ext:
    sys.path.insert(0, str(_root / "python"))
    spec = importlib.util.spec_from_file_location("tsgan._core", _ext)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    sys.modules["tsgan._core"] = module
