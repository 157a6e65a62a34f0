"""Backend selection for the hot loops.

The compiled extension is used when it was built; setting the environment
variable ``REGSIR_PURE_PYTHON=1`` forces the pure-Python implementation.
"""
import os

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

__all__ = ["BACKEND", "compiled_available", "get_backend", "monod_fast_rk4"]


def compiled_available() -> bool:
    return _compiled is not None


def get_backend(name: str):
    """Return the kernel module for ``'cython'`` or ``'python'``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("regsir._kernels is not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


if _compiled is not None and not os.environ.get("REGSIR_PURE_PYTHON"):
    BACKEND = "cython"
else:
    BACKEND = "python"

monod_fast_rk4 = get_backend(BACKEND).monod_fast_rk4
