"""Backend selection for the SIC-family block kernels.

The compiled extension is used when it imports; otherwise the pure-Python
loop over the reference detectors takes over. Set ``COOPCDMA_BACKEND`` to
``python`` to force the fallback, or to ``cython`` to fail loudly when the
extension is missing.
"""

import importlib
import os

_choice = os.environ.get("COOPCDMA_BACKEND", "auto").lower()
if _choice not in ("auto", "python", "cython"):
    raise ImportError(f"COOPCDMA_BACKEND must be auto, python or cython, got {_choice!r}")


def get_backend(name: str):
    """Return the kernel module for ``"cython"`` or ``"python"``."""
    if name == "cython":
        return importlib.import_module("coopcdma._ckernels")
    if name == "python":
        return importlib.import_module("coopcdma._pykernels")
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list:
    names = ["python"]
    try:
        get_backend("cython")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


if _choice == "python":
    _impl = get_backend("python")
    BACKEND = "python"
else:
    try:
        _impl = get_backend("cython")
        BACKEND = "cython"
    except ImportError:
        if _choice == "cython":
            raise
        _impl = get_backend("python")
        BACKEND = "python"

sic_block = _impl.sic_block
glsic_block = _impl.glsic_block
mbglsic_block = _impl.mbglsic_block
