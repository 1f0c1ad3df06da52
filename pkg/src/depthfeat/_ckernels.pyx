# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; results agree with _pykernels.py up to summation order."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def im2col(const double[:, :, ::1] xp, int kh, int kw, int stride):
    cdef Py_ssize_t c = xp.shape[0], hp = xp.shape[1], wp = xp.shape[2]
    cdef Py_ssize_t ho = (hp - kh) // stride + 1, wo = (wp - kw) // stride + 1
    out_arr = np.empty((c * kh * kw, ho * wo))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t ci, i, j, y, x, row
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for y in range(ho):
                    for x in range(wo):
                        out[row, y * wo + x] = xp[ci, y * stride + i, x * stride + j]
    return out_arr


def col2im(const double[:, ::1] cols, int c, int hp, int wp, int kh, int kw, int stride, int ho, int wo):
    out_arr = np.zeros((c, hp, wp))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ci, i, j, y, x, row
    for ci in range(c):
        for i in range(kh):
            for j in range(kw):
                row = (ci * kh + i) * kw + j
                for y in range(ho):
                    for x in range(wo):
                        out[ci, y * stride + i, x * stride + j] += cols[row, y * wo + x]
    return out_arr


cdef inline void _corner(double u, double v, Py_ssize_t h, Py_ssize_t w,
                         Py_ssize_t* u0, Py_ssize_t* v0, Py_ssize_t* u1, Py_ssize_t* v1,
                         double* au, double* av) nogil:
    cdef Py_ssize_t mu = w - 2 if w >= 2 else 0
    cdef Py_ssize_t mv = h - 2 if h >= 2 else 0
    if u < 0:
        u = 0
    elif u > w - 1:
        u = w - 1
    if v < 0:
        v = 0
    elif v > h - 1:
        v = h - 1
    u0[0] = <Py_ssize_t>floor(u)
    v0[0] = <Py_ssize_t>floor(v)
    if u0[0] > mu:
        u0[0] = mu
    if v0[0] > mv:
        v0[0] = mv
    au[0] = u - u0[0]
    av[0] = v - v0[0]
    u1[0] = u0[0] + 1 if u0[0] + 1 < w else w - 1
    v1[0] = v0[0] + 1 if v0[0] + 1 < h else h - 1


def bilinear_forward(const double[:, :, ::1] src, const double[:, ::1] u, const double[:, ::1] v):
    cdef Py_ssize_t c = src.shape[0], h = src.shape[1], w = src.shape[2]
    cdef Py_ssize_t ho = u.shape[0], wo = u.shape[1]
    out_arr = np.empty((c, ho, wo))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t y, x, ci, u0, v0, u1, v1
    cdef double au, av
    for y in range(ho):
        for x in range(wo):
            _corner(u[y, x], v[y, x], h, w, &u0, &v0, &u1, &v1, &au, &av)
            for ci in range(c):
                out[ci, y, x] = (src[ci, v0, u0] * ((1 - au) * (1 - av))
                                 + src[ci, v0, u1] * (au * (1 - av))
                                 + src[ci, v1, u0] * ((1 - au) * av)
                                 + src[ci, v1, u1] * (au * av))
    return out_arr


def bilinear_backward(const double[:, :, ::1] grad, const double[:, :, ::1] src,
                      const double[:, ::1] u, const double[:, ::1] v):
    cdef Py_ssize_t c = src.shape[0], h = src.shape[1], w = src.shape[2]
    cdef Py_ssize_t ho = u.shape[0], wo = u.shape[1]
    gsrc_arr = np.zeros((c, h, w))
    gu_arr = np.zeros((ho, wo))
    gv_arr = np.zeros((ho, wo))
    cdef double[:, :, ::1] gsrc = gsrc_arr
    cdef double[:, ::1] gu = gu_arr
    cdef double[:, ::1] gv = gv_arr
    cdef Py_ssize_t y, x, ci, u0, v0, u1, v1
    cdef double au, av, g, s00, s01, s10, s11, accu, accv, uu, vv
    for y in range(ho):
        for x in range(wo):
            uu = u[y, x]
            vv = v[y, x]
            _corner(uu, vv, h, w, &u0, &v0, &u1, &v1, &au, &av)
            accu = 0
            accv = 0
            for ci in range(c):
                g = grad[ci, y, x]
                s00 = src[ci, v0, u0]
                s01 = src[ci, v0, u1]
                s10 = src[ci, v1, u0]
                s11 = src[ci, v1, u1]
                accu += g * ((s01 - s00) * (1 - av) + (s11 - s10) * av)
                accv += g * ((s10 - s00) * (1 - au) + (s11 - s01) * au)
                gsrc[ci, v0, u0] += g * ((1 - au) * (1 - av))
                gsrc[ci, v0, u1] += g * (au * (1 - av))
                gsrc[ci, v1, u0] += g * ((1 - au) * av)
                gsrc[ci, v1, u1] += g * (au * av)
            if 0 <= uu <= w - 1:
                gu[y, x] = accu
            if 0 <= vv <= h - 1:
                gv[y, x] = accv
    return gsrc_arr, gu_arr, gv_arr


def box_sum3(const double[:, :, ::1] a):
    cdef Py_ssize_t n = a.shape[0], h = a.shape[1], w = a.shape[2]
    tmp_arr = np.empty((n, h, w))
    out_arr = np.empty((n, h, w))
    cdef double[:, :, ::1] tmp = tmp_arr
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t k, y, x
    cdef double acc
    for k in range(n):
        for y in range(h):
            for x in range(w):
                acc = a[k, y, x]
                if y > 0:
                    acc += a[k, y - 1, x]
                if y < h - 1:
                    acc += a[k, y + 1, x]
                tmp[k, y, x] = acc
        for y in range(h):
            for x in range(w):
                acc = tmp[k, y, x]
                if x > 0:
                    acc += tmp[k, y, x - 1]
                if x < w - 1:
                    acc += tmp[k, y, x + 1]
                out[k, y, x] = acc
    return out_arr
