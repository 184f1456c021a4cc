"""Backend selection for the gradient-flow kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation. ``FLSLAB_BACKEND=python`` forces the fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("FLSLAB_BACKEND", "").lower() not in ("python", "py", "numpy"):
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        _impl = _ckernels
        BACKEND = "cython"


def get_backend(name=None):
    """Return the kernel module for ``name`` (``"cython"``/``"python"``), or the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def risk_grad(X, y, W, v, gamma=1.0, sp0=0.0):
    return _impl.risk_grad(X, y, W, v, gamma, sp0)


def advance(X, y, pos, W, v, tau, scale, nsteps, heun=False, stop_level=-1.0, sp0=0.0):
    return _impl.advance(X, y, pos, W, v, tau, scale, nsteps, heun, stop_level, sp0)
