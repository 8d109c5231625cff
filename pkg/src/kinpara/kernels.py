"""Particle kernels: the compiled extension when importable, NumPy otherwise.

Set ``KINPARA_PURE=1`` to force the NumPy versions.
"""
from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
if os.environ.get("KINPARA_PURE", "") != "1":
    try:
        from . import _ckernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

pair_force = _impl.pair_force
bilinear_periodic = _impl.bilinear_periodic

__all__ = ["BACKEND", "pair_force", "bilinear_periodic"]
