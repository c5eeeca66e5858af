"""Backend-dispatched hot kernels.

Import kernel functions from here, never from _numba/_numpy directly:

    from facefront import _kernels as K
    K.raster_scan(...)

The active path is chosen once at import time by facefront._backend
(FACEFRONT_NUMBA env var). Shared tap-geometry helpers live here so both
paths consume identical precomputed offsets and weights.
"""

from __future__ import annotations

import numpy as np

from .._backend import NUMBA_ENABLED, backend_name

if NUMBA_ENABLED:
    from ._numba import (
        accumulate_hits,
        fplbp_codes,
        lbp_codes,
        raster_scan,
        tplbp_codes,
        warp_bilinear,
    )
else:
    from ._numpy import (
        accumulate_hits,
        fplbp_codes,
        lbp_codes,
        raster_scan,
        tplbp_codes,
        warp_bilinear,
    )

__all__ = [
    "NUMBA_ENABLED",
    "backend_name",
    "raster_scan",
    "warp_bilinear",
    "accumulate_hits",
    "lbp_codes",
    "tplbp_codes",
    "fplbp_codes",
    "circle_taps",
    "ring_offsets",
]


def circle_taps(radius: float, n: int):
    """Bilinear tap geometry for n points on a circle of the given radius.

    Returns (ix0, iy0, w00, w01, w10, w11): integer corner offsets and the
    four bilinear weights per tap. Taps that land within 1e-9 of an integer
    are snapped so exact pixel centers carry weight 1 on a single corner.
    """
    ang = 2.0 * np.pi * np.arange(n) / n
    dx = radius * np.cos(ang)
    dy = radius * np.sin(ang)
    dx = np.where(np.abs(dx - np.rint(dx)) < 1e-9, np.rint(dx), dx)
    dy = np.where(np.abs(dy - np.rint(dy)) < 1e-9, np.rint(dy), dy)
    ix0 = np.floor(dx).astype(np.int64)
    iy0 = np.floor(dy).astype(np.int64)
    fx = dx - ix0
    fy = dy - iy0
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    return ix0, iy0, w00, w01, w10, w11


def ring_offsets(radius: float, n: int):
    """Integer-rounded ring positions used by the patch-based descriptors."""
    ang = 2.0 * np.pi * np.arange(n) / n
    dx = np.rint(radius * np.cos(ang)).astype(np.int64)
    dy = np.rint(radius * np.sin(ang)).astype(np.int64)
    return dx, dy
