"""Kernel backend selection.

The compiled GRU kernel is used when it imports; otherwise the numpy one.
``HCAM_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _gru_py

_compiled = None
if os.environ.get("HCAM_PURE_PYTHON") != "1":
    try:
        from . import _gru_ext as _compiled
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _gru_py


def available_backends():
    return ["python"] + (["cython"] if _compiled is not None else [])


def backend():
    return "cython" if _impl is _compiled and _compiled is not None else "python"


def set_backend(name):
    global _impl
    if name == "python":
        _impl = _gru_py
    elif name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled GRU kernel is not available")
        _impl = _compiled
    else:
        raise ValueError(f"unknown backend {name!r}")


def gru_forward(ax, mask, u, h0):
    return _impl.gru_forward(ax, mask, u, h0)


def gru_backward(dhs, cache, mask, u):
    return _impl.gru_backward(dhs, cache, mask, u)
