"""Selects the compiled kernels when available, else the pure-Python ones.

Set ``WGANLAB_PURE=1`` to force the fallback.
"""
import os

if os.environ.get("WGANLAB_PURE", "") not in ("", "0"):
    from wganlab import _fallback as kernels
    COMPILED = False
else:
    try:
        from wganlab import _kernels as kernels
        COMPILED = True
    except ImportError:
        from wganlab import _fallback as kernels
        COMPILED = False

__all__ = ["kernels", "COMPILED"]
