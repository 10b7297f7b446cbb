"""Pick the compiled kernels when available, else the numpy fallback.

Set ``MNAREC_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _fallback

if os.environ.get("MNAREC_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
_impl = _compiled if _compiled is not None else _fallback

mf_objective_grad = _impl.mf_objective_grad
enumerate_moments = _impl.enumerate_moments


def implementations():
    """All importable kernel modules keyed by name."""
    out = {"python": _fallback}
    if _compiled is not None:
        out["cython"] = _compiled
    else:
        try:
            from . import _kernels
            out["cython"] = _kernels
        except ImportError:
            pass
    return out
