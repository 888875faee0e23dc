"""Backend selection for the training kernels.

The compiled extension is used when it imports; otherwise the numpy twins.
Set ``ARTIVAE_BACKEND=python`` to force the fallback.
"""
import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

_requested = os.environ.get("ARTIVAE_BACKEND", "").strip().lower()
if _requested and _requested not in ("python", "compiled"):
    raise ImportError(f"ARTIVAE_BACKEND must be 'python' or 'compiled', got {_requested!r}")
if _requested == "compiled" and _compiled is None:
    raise ImportError("ARTIVAE_BACKEND=compiled but artivae._kernels is not built")

BACKEND = _requested or ("compiled" if _compiled is not None else "python")
_active = BACKENDS[BACKEND]

adam_update = _active.adam_update
bias_tanh = _active.bias_tanh
tanh_backward = _active.tanh_backward
gaussian_nll = _active.gaussian_nll


def get_backend(name=None):
    """Return the kernel module for ``name`` (default: the active one)."""
    if name is None:
        return _active
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
