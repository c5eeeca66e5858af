"""Kernel backend selection.

Hot inner loops (triangle rasterization, warp synthesis, hit-count
accumulation) exist twice: a numba @njit version and a pure-numpy
fallback. The environment variable FACEFRONT_NUMBA picks the path:

    FACEFRONT_NUMBA=0   force the numpy fallback
    FACEFRONT_NUMBA=1   require numba (ImportError if unavailable)
    unset               use numba when importable, numpy otherwise

The flag is read once at import time; both paths compute identical values
(kernels avoid fastmath so arithmetic order matches).
"""

import os

_flag = os.environ.get("FACEFRONT_NUMBA", "").strip().lower()

if _flag in ("0", "false", "off", "no"):
    NUMBA_ENABLED = False
elif _flag in ("1", "true", "on", "yes"):
    import numba  # noqa: F401  -- fail loudly if forced but missing
    NUMBA_ENABLED = True
else:
    try:
        import numba  # noqa: F401
        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
