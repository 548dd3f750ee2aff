"""Kernel backend selection.

The compiled extension is used when it imports; set ``DELAYLT_PURE=1`` to
force the NumPy version.
"""

import os

from . import _kernels_py

BACKEND = "numpy"
select_slots = _kernels_py.select_slots

if os.environ.get("DELAYLT_PURE", "") not in ("1", "true", "yes"):
    try:
        from ._kernels import select_slots  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # extension not built
        pass

__all__ = ["BACKEND", "select_slots"]
