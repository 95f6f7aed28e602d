"""Raycast kernel backend selection.

The compiled Cython kernel is used when available; set RPL_RACER_KERNELS=pure
to force the numpy fallback. Both backends implement the same traversal and
produce bit-identical ranges.
"""

import os

from . import pure

BACKEND = "pure"
cast_rays = pure.cast_rays

if os.environ.get("RPL_RACER_KERNELS", "").lower() not in ("pure", "python"):
    try:
        from . import _core

        BACKEND = "compiled"
        cast_rays = _core.cast_rays
    except ImportError:
        pass

__all__ = ["BACKEND", "cast_rays", "pure"]
