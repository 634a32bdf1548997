"""Pick the compiled kernels when the extension is built, else the fallback.

Set ``EVIMUTUAL_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

BACKEND = "python"
if not os.environ.get("EVIMUTUAL_PURE_PYTHON"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
else:
    _impl = _fallback

splitmix_uint64 = _impl.splitmix_uint64
edt_sq = _impl.edt_sq
INF = _fallback.INF
