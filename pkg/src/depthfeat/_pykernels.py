"""Pure numpy implementations of the hot kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``DEPTHFEAT_PURE_PYTHON=1`` is set. Signatures mirror ``_ckernels.pyx``.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xp, kh, kw, stride):
    """(C, Hp, Wp) padded input -> (C*kh*kw, Ho*Wo) patch matrix."""
    c = xp.shape[0]
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    return np.ascontiguousarray(win.transpose(0, 3, 4, 1, 2)).reshape(c * kh * kw, ho * wo)


def col2im(cols, c, hp, wp, kh, kw, stride, ho, wo):
    """Adjoint of :func:`im2col`: scatter-add patches back into (C, Hp, Wp)."""
    out = np.zeros((c, hp, wp))
    cols = cols.reshape(c, kh, kw, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, i, j]
    return out


def _corners(u, v, h, w):
    u = np.clip(u, 0.0, w - 1.0)
    v = np.clip(v, 0.0, h - 1.0)
    u0 = np.minimum(np.floor(u), max(w - 2, 0)).astype(np.intp)
    v0 = np.minimum(np.floor(v), max(h - 2, 0)).astype(np.intp)
    au = u - u0
    av = v - v0
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    return u0, v0, u1, v1, au, av


def bilinear_forward(src, u, v):
    """Sample (C, H, W) ``src`` at float pixel coords ``u``, ``v`` (Ho, Wo).

    Coordinates are clamped to the image border.
    """
    _, h, w = src.shape
    u0, v0, u1, v1, au, av = _corners(u, v, h, w)
    return (src[:, v0, u0] * ((1 - au) * (1 - av))
            + src[:, v0, u1] * (au * (1 - av))
            + src[:, v1, u0] * ((1 - au) * av)
            + src[:, v1, u1] * (au * av))


def bilinear_backward(grad, src, u, v):
    """Returns (grad_src, grad_u, grad_v). Clamped coordinates get zero gradient."""
    c, h, w = src.shape
    u0, v0, u1, v1, au, av = _corners(u, v, h, w)
    s00, s01 = src[:, v0, u0], src[:, v0, u1]
    s10, s11 = src[:, v1, u0], src[:, v1, u1]
    inside_u = (u >= 0) & (u <= w - 1)
    inside_v = (v >= 0) & (v <= h - 1)
    gu = (grad * ((s01 - s00) * (1 - av) + (s11 - s10) * av)).sum(axis=0) * inside_u
    gv = (grad * ((s10 - s00) * (1 - au) + (s11 - s01) * au)).sum(axis=0) * inside_v

    hw = h * w
    offs = (np.arange(c) * hw)[:, None]
    gsrc = np.zeros(c * hw)
    g2 = grad.reshape(c, -1)
    for vi, ui, wt in ((v0, u0, (1 - au) * (1 - av)), (v0, u1, au * (1 - av)),
                       (v1, u0, (1 - au) * av), (v1, u1, au * av)):
        idx = (offs + (vi * w + ui).ravel()[None, :]).ravel()
        gsrc += np.bincount(idx, weights=(g2 * wt.ravel()[None, :]).ravel(), minlength=c * hw)
    return gsrc.reshape(c, h, w), gu, gv


def box_sum3(a):
    """3x3 neighbourhood sum of each (H, W) plane, zero outside the image."""
    s = a.copy()
    s[:, 1:, :] += a[:, :-1, :]
    s[:, :-1, :] += a[:, 1:, :]
    t = s.copy()
    t[:, :, 1:] += s[:, :, :-1]
    t[:, :, :-1] += s[:, :, 1:]
    return t
