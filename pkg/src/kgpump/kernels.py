"""Backend selection for the hot loops.

The compiled extension is used when it imports; setting ``KGPUMP_PURE=1``
forces the numpy fallback (useful for benchmarking and for checking that
both paths agree).
"""
import os

from . import _fallback

BACKEND = "python"
if os.environ.get("KGPUMP_PURE") != "1":
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

kdk_fd4 = _impl.kdk_fd4
accel_fd4 = _impl.accel_fd4
zs_scattering_a = _impl.zs_scattering_a

__all__ = ["BACKEND", "kdk_fd4", "accel_fd4", "zs_scattering_a", "_fallback"]
