"""Element-kernel backend selection.

The compiled extension is preferred when importable; the numpy reference
implementation is the fallback. Set ``RETRACTLAB_FORCE_PY=1`` to force the
fallback (used by tests and the benchmark).
"""

from __future__ import annotations

import os

from retractlab.fem import _kernels_py

__all__ = [
    "energy",
    "gradient",
    "stiffness_blocks",
    "backend",
    "implementations",
]

_impl = _kernels_py
_name = "numpy"

if not os.environ.get("RETRACTLAB_FORCE_PY"):
    try:
        from retractlab.fem import _kernels as _ext

        _impl = _ext
        _name = "cython"
    except ImportError:  # extension not built
        pass


def backend() -> str:
    """Name of the active backend: 'cython' or 'numpy'."""
    return _name


def implementations() -> dict:
    """All importable backends, name -> module."""
    impls = {"numpy": _kernels_py}
    try:
        from retractlab.fem import _kernels as _ext

        impls["cython"] = _ext
    except ImportError:
        pass
    return impls


energy = _impl.energy
gradient = _impl.gradient
stiffness_blocks = _impl.stiffness_blocks
