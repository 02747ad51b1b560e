# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled convolution kernels. Same contracts as numpy_backend.

Loops run over channel-contiguous transposed layouts so the innermost loop
is a unit-stride multiply-accumulate the compiler can vectorize; the cheap
layout transposes happen in numpy on entry/exit.
"""

import numpy as np

from cython cimport floating


def conv1d_fwd(x, w, b, int stride, int dilation, int pad_left):
    xp = np.pad(x, ((0, 0), (0, 0), (pad_left, 0))) if pad_left else x
    cdef int k = w.shape[2]
    cdef int t_out = (xp.shape[2] - (k - 1) * dilation - 1) // stride + 1
    xpt = np.ascontiguousarray(np.transpose(xp, (0, 2, 1)))          # [B, Tp, Ci]
    wt = np.ascontiguousarray(np.transpose(w, (1, 2, 0)))            # [Ci, K, Co]
    yt = np.zeros((x.shape[0], t_out, w.shape[0]), dtype=x.dtype)    # [B, T, Co]
    _conv_fwd_t(xpt, wt, yt, stride, dilation)
    y = np.ascontiguousarray(np.transpose(yt, (0, 2, 1)))
    if b is not None:
        y += np.asarray(b)[None, :, None]
    return y


def conv1d_bwd(x, w, int stride, int dilation, int pad_left, gy,
               bint need_gx=True, bint need_gw=True):
    xp = np.pad(x, ((0, 0), (0, 0), (pad_left, 0))) if pad_left else x
    xpt = np.ascontiguousarray(np.transpose(xp, (0, 2, 1)))          # [B, Tp, Ci]
    gyt = np.ascontiguousarray(np.transpose(gy, (0, 2, 1)))          # [B, T, Co]
    wt = np.ascontiguousarray(np.transpose(w, (2, 0, 1)))            # [K, Co, Ci]
    gb = gy.sum(axis=(0, 2))
    gx = gw = None
    if need_gx:
        gxpt = np.zeros_like(xpt)
        _conv_bwd_gx_t(wt, gyt, gxpt, stride, dilation)
        gx = np.ascontiguousarray(np.transpose(gxpt, (0, 2, 1))[:, :, pad_left:])
    if need_gw:
        gwt = np.zeros_like(wt)
        _conv_bwd_gw_t(xpt, gyt, gwt, stride, dilation)
        gw = np.ascontiguousarray(np.transpose(gwt, (1, 2, 0)))
    return gx, gw, gb


def convt1d_fwd(x, w, b, int stride, int trim_right):
    cdef int t = x.shape[2]
    cdef int k = w.shape[2]
    cdef int full = (t - 1) * stride + k
    xt = np.ascontiguousarray(np.transpose(x, (0, 2, 1)))            # [B, T, Ci]
    wt = np.ascontiguousarray(np.transpose(w, (0, 2, 1)))            # [Ci, K, Co]
    yt = np.zeros((x.shape[0], full, w.shape[1]), dtype=x.dtype)     # [B, full, Co]
    _convt_fwd_t(xt, wt, yt, stride)
    y = np.ascontiguousarray(np.transpose(yt, (0, 2, 1)))
    if trim_right:
        y = np.ascontiguousarray(y[:, :, : full - trim_right])
    if b is not None:
        y += np.asarray(b)[None, :, None]
    return y


def convt1d_bwd(x, w, int stride, int trim_right, gy,
                bint need_gx=True, bint need_gw=True):
    gb = gy.sum(axis=(0, 2))
    gyf = np.pad(gy, ((0, 0), (0, 0), (0, trim_right))) if trim_right else gy
    xt = np.ascontiguousarray(np.transpose(x, (0, 2, 1)))            # [B, T, Ci]
    gyft = np.ascontiguousarray(np.transpose(gyf, (0, 2, 1)))        # [B, full, Co]
    wt = np.ascontiguousarray(np.transpose(w, (2, 1, 0)))            # [K, Co, Ci]
    gx = gw = None
    if need_gx:
        gxt = np.zeros_like(xt)
        _convt_bwd_gx_t(wt, gyft, gxt, stride)
        gx = np.ascontiguousarray(np.transpose(gxt, (0, 2, 1)))
    if need_gw:
        gwt = np.zeros_like(wt)
        _convt_bwd_gw_t(xt, gyft, gwt, stride)
        gw = np.ascontiguousarray(np.transpose(gwt, (2, 1, 0)))
    return gx, gw, gb


def _conv_fwd_t(floating[:, :, ::1] xpt, floating[:, :, ::1] wt,
                floating[:, :, ::1] yt, int stride, int dilation):
    # yt[b,t,co] += xpt[b, t*stride + kk*dilation, ci] * wt[ci,kk,co]
    cdef Py_ssize_t b, t, ci, kk, co
    cdef Py_ssize_t bsz = xpt.shape[0], cin = xpt.shape[2]
    cdef Py_ssize_t k = wt.shape[1], cout = wt.shape[2], t_out = yt.shape[1]
    cdef floating xv
    with nogil:
        for b in range(bsz):
            for ci in range(cin):
                for kk in range(k):
                    for t in range(t_out):
                        xv = xpt[b, t * stride + kk * dilation, ci]
                        if xv == 0:
                            continue
                        for co in range(cout):
                            yt[b, t, co] += xv * wt[ci, kk, co]


def _conv_bwd_gx_t(floating[:, :, ::1] wt, floating[:, :, ::1] gyt,
                   floating[:, :, ::1] gxpt, int stride, int dilation):
    # gxpt[b, t*stride + kk*dilation, ci] += gyt[b,t,co] * wt[kk,co,ci]
    cdef Py_ssize_t b, t, ci, kk, co, p
    cdef Py_ssize_t bsz = gxpt.shape[0], cin = gxpt.shape[2]
    cdef Py_ssize_t k = wt.shape[0], cout = wt.shape[1], t_out = gyt.shape[1]
    cdef floating gv
    with nogil:
        for b in range(bsz):
            for t in range(t_out):
                for kk in range(k):
                    p = t * stride + kk * dilation
                    for co in range(cout):
                        gv = gyt[b, t, co]
                        if gv == 0:
                            continue
                        for ci in range(cin):
                            gxpt[b, p, ci] += gv * wt[kk, co, ci]


def _conv_bwd_gw_t(floating[:, :, ::1] xpt, floating[:, :, ::1] gyt,
                   floating[:, :, ::1] gwt, int stride, int dilation):
    # gwt[kk,co,ci] += gyt[b,t,co] * xpt[b, t*stride + kk*dilation, ci]
    cdef Py_ssize_t b, t, ci, kk, co, p
    cdef Py_ssize_t bsz = xpt.shape[0], cin = xpt.shape[2]
    cdef Py_ssize_t k = gwt.shape[0], cout = gwt.shape[1], t_out = gyt.shape[1]
    cdef floating gv
    with nogil:
        for b in range(bsz):
            for t in range(t_out):
                for kk in range(k):
                    p = t * stride + kk * dilation
                    for co in range(cout):
                        gv = gyt[b, t, co]
                        if gv == 0:
                            continue
                        for ci in range(cin):
                            gwt[kk, co, ci] += gv * xpt[b, p, ci]


def _convt_fwd_t(floating[:, :, ::1] xt, floating[:, :, ::1] wt,
                 floating[:, :, ::1] yt, int stride):
    # yt[b, t*stride + kk, co] += xt[b,t,ci] * wt[ci,kk,co]
    cdef Py_ssize_t b, t, ci, kk, co
    cdef Py_ssize_t bsz = xt.shape[0], t_in = xt.shape[1], cin = xt.shape[2]
    cdef Py_ssize_t k = wt.shape[1], cout = wt.shape[2]
    cdef floating xv
    with nogil:
        for b in range(bsz):
            for ci in range(cin):
                for kk in range(k):
                    for t in range(t_in):
                        xv = xt[b, t, ci]
                        if xv == 0:
                            continue
                        for co in range(cout):
                            yt[b, t * stride + kk, co] += xv * wt[ci, kk, co]


def _convt_bwd_gx_t(floating[:, :, ::1] wt, floating[:, :, ::1] gyft,
                    floating[:, :, ::1] gxt, int stride):
    # gxt[b,t,ci] += gyft[b, t*stride+kk, co] * wt[kk,co,ci]
    cdef Py_ssize_t b, t, ci, kk, co, p
    cdef Py_ssize_t bsz = gxt.shape[0], t_in = gxt.shape[1], cin = gxt.shape[2]
    cdef Py_ssize_t k = wt.shape[0], cout = wt.shape[1]
    cdef floating gv
    with nogil:
        for b in range(bsz):
            for t in range(t_in):
                for kk in range(k):
                    p = t * stride + kk
                    for co in range(cout):
                        gv = gyft[b, p, co]
                        if gv == 0:
                            continue
                        for ci in range(cin):
                            gxt[b, t, ci] += gv * wt[kk, co, ci]


def _convt_bwd_gw_t(floating[:, :, ::1] xt, floating[:, :, ::1] gyft,
                    floating[:, :, ::1] gwt, int stride):
    # gwt[kk,co,ci] += gyft[b, t*stride+kk, co] * xt[b,t,ci]
    cdef Py_ssize_t b, t, ci, kk, co, p
    cdef Py_ssize_t bsz = xt.shape[0], t_in = xt.shape[1], cin = xt.shape[2]
    cdef Py_ssize_t k = gwt.shape[0], cout = gwt.shape[1]
    cdef floating gv
    with nogil:
        for b in range(bsz):
            for t in range(t_in):
                for kk in range(k):
                    p = t * stride + kk
                    for co in range(cout):
                        gv = gyft[b, p, co]
                        if gv == 0:
                            continue
                        for ci in range(cin):
                            gwt[kk, co, ci] += gv * xt[b, t, ci]
