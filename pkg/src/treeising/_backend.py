"""Kernel backend selection.

The compiled extension is used when importable; ``TREEISING_BACKEND=python``
forces the pure-Python fallback.
"""
import os

from . import _fallback

if os.environ.get("TREEISING_BACKEND", "").lower() == "python":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

f_theta = _impl.f_theta
glauber_run = _impl.glauber_run
bp_upward = _impl.bp_upward
bp_downward = _impl.bp_downward
