"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when importable; set
``HYDROVRB_PURE_PYTHON=1`` to force the pure-Python twin. ``BACKEND`` names
the active one.
"""
import os

from . import _core_py

if os.environ.get("HYDROVRB_PURE_PYTHON") == "1":
    _impl = _core_py
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _core_py

BACKEND = "python" if _impl is _core_py else "compiled"

quad_advance = _impl.quad_advance
quad_derivative = _impl.quad_derivative
doublet_induced = _impl.doublet_induced


def get_backend(name: str):
    """Return the kernel module for ``"python"`` or ``"compiled"``."""
    if name == "python":
        return _core_py
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend {name!r}")
