"""Pure-numpy convolution kernels (im2col views + batched BLAS matmul).

Fallback backend; the compiled Cython backend implements the same four
entry points. All functions take and return plain ndarrays; padding and
trimming conventions are part of the kernel contract so that both backends
and the autodiff wrappers agree exactly.
"""
from __future__ import annotations

import numpy as np


def _conv_windows(xp, k, stride, dilation, t_out):
    # Strided view [B, Ci, K, T_out] over the padded input.
    b, ci, tp = xp.shape
    sb, sc, st = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        shape=(b, ci, k, t_out),
        strides=(sb, sc, st * dilation, st * stride),
        writeable=False,
    )


def _tconv_windows(gyf, k, stride, t_in):
    # Strided view [B, Co, K, T_in]: entry (b,o,kk,t) = gyf[b, o, t*stride + kk].
    b, co, full = gyf.shape
    sb, sc, st = gyf.strides
    return np.lib.stride_tricks.as_strided(
        gyf,
        shape=(b, co, k, t_in),
        strides=(sb, sc, st, st * stride),
        writeable=False,
    )


def conv1d_fwd(x, w, b, stride, dilation, pad_left):
    """x[B,Ci,T], w[Co,Ci,K], b[Co] -> y[B,Co,T_out].

    T_out = (T + pad_left - (K-1)*dilation - 1) // stride + 1.
    """
    bsz, ci, t = x.shape
    co, _, k = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad_left, 0))) if pad_left else x
    t_out = (xp.shape[2] - (k - 1) * dilation - 1) // stride + 1
    col = np.ascontiguousarray(_conv_windows(xp, k, stride, dilation, t_out))
    y = np.matmul(w.reshape(co, ci * k)[None], col.reshape(bsz, ci * k, t_out))
    if b is not None:
        y += b[None, :, None]
    return y


def conv1d_bwd(x, w, stride, dilation, pad_left, gy, need_gx=True, need_gw=True):
    """Gradients of conv1d_fwd w.r.t. x, w, b given gy[B,Co,T_out]."""
    bsz, ci, t = x.shape
    co, _, k = w.shape
    t_out = gy.shape[2]
    gb = gy.sum(axis=(0, 2))

    gw = None
    if need_gw:
        xp = np.pad(x, ((0, 0), (0, 0), (pad_left, 0))) if pad_left else x
        col = np.ascontiguousarray(_conv_windows(xp, k, stride, dilation, t_out))
        gw = np.matmul(gy, col.reshape(bsz, ci * k, t_out).transpose(0, 2, 1)).sum(axis=0)
        gw = gw.reshape(co, ci, k)

    gx = None
    if need_gx:
        # Scatter: x position kk*dilation + t*stride accumulates w[:, :, kk]^T gy[:, :, t].
        gcol = np.matmul(w.reshape(co, ci * k).T[None], gy).reshape(bsz, ci, k, t_out)
        gxp = np.zeros((bsz, ci, t + pad_left), dtype=x.dtype)
        span = (t_out - 1) * stride + 1
        for kk in range(k):
            gxp[:, :, kk * dilation: kk * dilation + span: stride] += gcol[:, :, kk]
        gx = np.ascontiguousarray(gxp[:, :, pad_left:]) if pad_left else gxp
    return gx, gw, gb


def convt1d_fwd(x, w, b, stride, trim_right):
    """x[B,Ci,T], w[Ci,Co,K], b[Co] -> y[B,Co,(T-1)*stride + K - trim_right].

    Standard transposed convolution; the caller picks trim_right = K - stride
    for the causal variant (output length exactly T*stride).
    """
    bsz, ci, t = x.shape
    _, co, k = w.shape
    full = (t - 1) * stride + k
    spread = np.matmul(w.reshape(ci, co * k).T[None],
                       np.ascontiguousarray(x)).reshape(bsz, co, k, t)
    y = np.zeros((bsz, co, full), dtype=x.dtype)
    span = (t - 1) * stride + 1
    for kk in range(k):
        y[:, :, kk: kk + span: stride] += spread[:, :, kk]
    if trim_right:
        y = np.ascontiguousarray(y[:, :, : full - trim_right])
    if b is not None:
        y += b[None, :, None]
    return y


def convt1d_bwd(x, w, stride, trim_right, gy, need_gx=True, need_gw=True):
    """Gradients of convt1d_fwd w.r.t. x, w, b given gy over the trimmed output."""
    bsz, ci, t = x.shape
    _, co, k = w.shape
    gb = gy.sum(axis=(0, 2))
    gyf = np.pad(gy, ((0, 0), (0, 0), (0, trim_right))) if trim_right else gy
    wins = np.ascontiguousarray(_tconv_windows(gyf, k, stride, t))  # [B,Co,K,T]

    gx = None
    if need_gx:
        gx = np.matmul(w.reshape(ci, co * k)[None], wins.reshape(bsz, co * k, t))
    gw = None
    if need_gw:
        gw = np.matmul(np.ascontiguousarray(x),
                       wins.reshape(bsz, co * k, t).transpose(0, 2, 1)).sum(axis=0)
        gw = gw.reshape(ci, co, k)
    return gx, gw, gb
