"""Kernel backend selection.

The compiled Cython extension is preferred; the numpy fallback is used when
the extension was not built or ``DEPTHFEAT_PURE_PYTHON`` is set to a truthy
value before import.
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("DEPTHFEAT_PURE_PYTHON", "").lower() not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def im2col(xp, kh, kw, stride):
    return _impl.im2col(_c(xp), kh, kw, stride)


def col2im(cols, c, hp, wp, kh, kw, stride, ho, wo):
    return _impl.col2im(_c(cols), c, hp, wp, kh, kw, stride, ho, wo)


def bilinear_forward(src, u, v):
    return _impl.bilinear_forward(_c(src), _c(u), _c(v))


def bilinear_backward(grad, src, u, v):
    return _impl.bilinear_backward(_c(grad), _c(src), _c(u), _c(v))


def box_sum3(a):
    return _impl.box_sum3(_c(a))
