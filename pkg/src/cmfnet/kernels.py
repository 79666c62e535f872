"""Backend selection for the convolution hot loops.

The compiled extension is used when it was built and ``CMFNET_PURE_PYTHON`` is
unset; otherwise the numpy fallback is used. Both produce identical results.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("CMFNET_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        _impl = _compiled


def use_backend(name):
    """Switch backend at runtime (``"cython"`` or ``"python"``); used by benchmarks/tests."""
    global BACKEND, _impl
    if name == "python":
        _impl = _kernels_py
    elif name == "cython":
        from . import _kernels as compiled

        _impl = compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
    BACKEND = name


def available_backends():
    names = ["python"]
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return names
    return names + ["cython"]


def im2col(x, kh, kw, stride=1, pad=0):
    return _impl.im2col(np.ascontiguousarray(x), kh, kw, stride, pad)


def col2im(cols, shape, kh, kw, stride=1, pad=0):
    return _impl.col2im(np.ascontiguousarray(cols), tuple(shape), kh, kw, stride, pad)
