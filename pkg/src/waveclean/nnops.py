"""Neural-net primitives on Tensors: causal convolutions, GRU, norms,
gates, pooling. Everything here is differentiable through the tape.

Shape convention: feature maps are [B, C, T]; GRU sequences are [B, T, C].
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .tensor import Tensor, concat


class ShapeError(ValueError):
    pass


def _as3d(name, t, channels=None):
    if t.ndim != 3:
        raise ShapeError(f"{name}: expected [B, C, T], got shape {t.shape}")
    if channels is not None and t.shape[1] != channels:
        raise ShapeError(f"{name}: expected {channels} channels, got {t.shape[1]}")


def _same_dtype(name, *tensors):
    dtypes = {t.dtype for t in tensors if t is not None}
    if len(dtypes) > 1:
        raise ShapeError(f"{name}: mixed dtypes {sorted(d.name for d in dtypes)}")


# -- convolutions ------------------------------------------------------------


def conv1d_causal(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, dilation: int = 1) -> Tensor:
    """Left-padded 1-D convolution: output frame t sees inputs <= t*stride.

    x[B,Cin,T], w[Cout,Cin,K], b[Cout] -> [B,Cout,ceil(T/stride)].
    """
    _as3d("conv1d_causal", x)
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv1d_causal: input has {x.shape[1]} channels, weight expects {w.shape[1]}"
        )
    _same_dtype("conv1d_causal", x, w, b)
    k = w.shape[2]
    pad_left = (k - 1) * dilation
    y = kernels.conv1d_fwd(x.data, w.data, b.data if b is not None else None,
                           stride, dilation, pad_left)

    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        gx, gw, gb = kernels.conv1d_bwd(x.data, w.data, stride, dilation, pad_left, g,
                                        x.requires_grad, w.requires_grad)
        if x.requires_grad:
            x._accumulate(gx)
        if w.requires_grad:
            w._accumulate(gw)
        if b is not None and b.requires_grad:
            b._accumulate(gb)

    return Tensor._from_op(y, parents, bwd)


def conv_transpose1d_causal(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """Transposed 1-D convolution with the trailing (K - stride) samples
    trimmed so no output depends on future input frames.

    x[B,Cin,T], w[Cin,Cout,K], b[Cout] -> [B,Cout,T*stride].
    """
    _as3d("conv_transpose1d_causal", x)
    if x.shape[1] != w.shape[0]:
        raise ShapeError(
            f"conv_transpose1d_causal: input has {x.shape[1]} channels, weight expects {w.shape[0]}"
        )
    _same_dtype("conv_transpose1d_causal", x, w, b)
    k = w.shape[2]
    if k < stride:
        raise ShapeError(f"conv_transpose1d_causal: kernel {k} < stride {stride}")
    trim = k - stride
    y = kernels.convt1d_fwd(x.data, w.data, b.data if b is not None else None, stride, trim)

    parents = (x, w) if b is None else (x, w, b)

    def bwd(g):
        gx, gw, gb = kernels.convt1d_bwd(x.data, w.data, stride, trim, g,
                                         x.requires_grad, w.requires_grad)
        if x.requires_grad:
            x._accumulate(gx)
        if w.requires_grad:
            w._accumulate(gw)
        if b is not None and b.requires_grad:
            b._accumulate(gb)

    return Tensor._from_op(y, parents, bwd)


# -- gates and activations ---------------------------------------------------


def glu(x: Tensor) -> Tensor:
    """Gated linear unit over the channel axis; halves the channel count."""
    _as3d("glu", x)
    c2 = x.shape[1]
    if c2 % 2:
        raise ShapeError(f"glu: channel count {c2} is odd")
    c = c2 // 2
    return x[:, :c, :] * x[:, c:, :].sigmoid()


def relu(x: Tensor) -> Tensor:
    return x.relu()


def sigmoid(x: Tensor) -> Tensor:
    return x.sigmoid()


def prelu(x: Tensor, a: Tensor) -> Tensor:
    """PReLU with per-channel slope a[C] on [B,C,T] input (or scalar a)."""
    a_b = a.data.reshape(1, -1, 1) if x.ndim == 3 else a.data
    pos = x.data > 0
    out = np.where(pos, x.data, a_b * x.data)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.where(pos, g, a_b * g))
        if a.requires_grad:
            ga = np.where(pos, 0.0, g * x.data)
            if a.data.size == 1:
                ga = ga.sum()
            elif x.ndim == 3:
                ga = ga.sum(axis=(0, 2))
            else:
                ga = ga.sum(axis=0)
            a._accumulate(np.asarray(ga).reshape(a.shape))

    return Tensor._from_op(out, (x, a), bwd)


def pad_time_left(x: Tensor, pad: int) -> Tensor:
    """Prepend `pad` zero samples along the time axis of [B,C,T]."""
    _as3d("pad_time_left", x)
    if pad == 0:
        return x
    data = np.pad(x.data, ((0, 0), (0, 0), (pad, 0)))

    def bwd(g):
        x._accumulate(g[:, :, pad:])

    return Tensor._from_op(data, (x,), bwd)


def cumsum_time(x: Tensor) -> Tensor:
    """Cumulative sum over the time axis of [B,C,T], accumulated in float64."""
    _as3d("cumsum_time", x)
    data = np.cumsum(x.data, axis=2, dtype=np.float64).astype(x.dtype)

    def bwd(g):
        rev = np.cumsum(g[:, :, ::-1], axis=2, dtype=np.float64)[:, :, ::-1]
        x._accumulate(rev.astype(x.dtype))

    return Tensor._from_op(data, (x,), bwd)


# -- normalization -----------------------------------------------------------

NORM_EPS = 1e-5


def batch_norm1d(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
                 running_var: np.ndarray, train: bool, momentum: float = 0.1) -> Tensor:
    """Per-channel batch norm on [B,C,T]. Train mode normalizes by batch
    statistics and updates the running buffers in place; infer mode uses the
    stored statistics only. Biased variance throughout.
    """
    _as3d("batch_norm1d", x, channels=gamma.shape[0])
    c = gamma.shape[0]
    g = gamma.reshape(1, c, 1)
    b = beta.reshape(1, c, 1)
    if train:
        mean = x.mean(axis=(0, 2), keepdims=True)
        var = ((x - mean) ** 2).mean(axis=(0, 2), keepdims=True)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean.data.reshape(c)
        running_var *= 1.0 - momentum
        running_var += momentum * var.data.reshape(c)
        xhat = (x - mean) / ((var + NORM_EPS) ** 0.5)
    else:
        rm = running_mean.reshape(1, c, 1).astype(x.dtype)
        rs = np.sqrt(running_var.reshape(1, c, 1) + NORM_EPS).astype(x.dtype)
        xhat = (x - Tensor(rm)) * Tensor(1.0 / rs)
    return xhat * g + b


def instance_norm1d(x: Tensor, gamma: Tensor, beta: Tensor) -> Tensor:
    """Normalize each (batch, channel) series over time; affine per channel."""
    _as3d("instance_norm1d", x, channels=gamma.shape[0])
    c = gamma.shape[0]
    mean = x.mean(axis=2, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=2, keepdims=True)
    xhat = (x - mean) / ((var + NORM_EPS) ** 0.5)
    return xhat * gamma.reshape(1, c, 1) + beta.reshape(1, c, 1)


# -- pooling -----------------------------------------------------------------


def global_avg_pool_time(x: Tensor) -> Tensor:
    """[B,C,T] -> [B,C] time average."""
    _as3d("global_avg_pool_time", x)
    return x.mean(axis=2)


def adaptive_max_pool_time(x: Tensor, out_len: int) -> Tensor:
    """[B,C,T] -> [B,C,out_len]; bin i covers [floor(i*T/L), ceil((i+1)*T/L)).

    Gradient routes to the argmax of each bin, ties broken to the lowest index.
    """
    _as3d("adaptive_max_pool_time", x)
    bsz, c, t = x.shape
    if t < 1:
        raise ShapeError("adaptive_max_pool_time: empty time axis")
    bounds = [(int(np.floor(i * t / out_len)), int(np.ceil((i + 1) * t / out_len)))
              for i in range(out_len)]
    out = np.empty((bsz, c, out_len), dtype=x.dtype)
    argmax = np.empty((bsz, c, out_len), dtype=np.int64)
    for i, (lo, hi) in enumerate(bounds):
        seg = x.data[:, :, lo:hi]
        idx = seg.argmax(axis=2)
        out[:, :, i] = np.take_along_axis(seg, idx[:, :, None], axis=2)[:, :, 0]
        argmax[:, :, i] = idx + lo

    def bwd(g):
        gx = np.zeros_like(x.data)
        bi, ci = np.meshgrid(np.arange(bsz), np.arange(c), indexing="ij")
        for i in range(out_len):
            np.add.at(gx, (bi, ci, argmax[:, :, i]), g[:, :, i])
        x._accumulate(gx)

    return Tensor._from_op(out, (x,), bwd)


# -- linear ------------------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x[..., Cin] @ w[Cout, Cin].T + b."""
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight width {w.shape[1]}")
    lead = x.shape[:-1]
    flat = x.reshape(int(np.prod(lead)) if lead else 1, x.shape[-1])
    out = flat.matmul(w.transpose(1, 0))
    if b is not None:
        out = out + b
    return out.reshape(*lead, w.shape[0])


# -- GRU ---------------------------------------------------------------------


def gru_layer(x: Tensor, w_ih: Tensor, w_hh: Tensor, b_ih: Tensor, b_hh: Tensor,
              h0: Tensor | None = None) -> tuple[Tensor, Tensor]:
    """Uni-directional GRU over x[B,T,C]; returns (seq[B,T,H], h_T[B,H]).

    Gate layout follows the (reset, update, candidate) convention:
        r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
        z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
        n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
        h' = (1 - z) * n + z * h
    Backward is hand-rolled truncated-free BPTT over the full sequence.
    """
    if x.ndim != 3:
        raise ShapeError(f"gru_layer: expected [B, T, C], got {x.shape}")
    bsz, t, c = x.shape
    hd = w_hh.shape[1]
    if w_ih.shape != (3 * hd, c):
        raise ShapeError(f"gru_layer: w_ih shape {w_ih.shape} != {(3 * hd, c)}")
    if h0 is not None and h0.shape != (bsz, hd):
        raise ShapeError(f"gru_layer: h0 shape {h0.shape} != {(bsz, hd)}")
    _same_dtype("gru_layer", x, w_ih, w_hh, b_ih, b_hh, h0)
    h0_data = h0.data if h0 is not None else np.zeros((bsz, hd), dtype=x.dtype)

    seq, cache = _gru_fwd(x.data, w_ih.data, w_hh.data, b_ih.data, b_hh.data, h0_data)

    parents = (x, w_ih, w_hh, b_ih, b_hh) + ((h0,) if h0 is not None else ())

    def bwd(g):
        gx, gwi, gwh, gbi, gbh, gh0 = _gru_bwd(
            x.data, w_ih.data, w_hh.data, cache, g)
        if x.requires_grad:
            x._accumulate(gx)
        if w_ih.requires_grad:
            w_ih._accumulate(gwi)
        if w_hh.requires_grad:
            w_hh._accumulate(gwh)
        if b_ih.requires_grad:
            b_ih._accumulate(gbi)
        if b_hh.requires_grad:
            b_hh._accumulate(gbh)
        if h0 is not None and h0.requires_grad:
            h0._accumulate(gh0)

    out = Tensor._from_op(seq, parents, bwd)
    return out, out[:, -1, :]


def _gru_fwd(x, w_ih, w_hh, b_ih, b_hh, h0):
    bsz, t, c = x.shape
    hd = w_hh.shape[1]
    xp = x.reshape(bsz * t, c) @ w_ih.T + b_ih
    xp = xp.reshape(bsz, t, 3 * hd)
    seq = np.empty((bsz, t, hd), dtype=x.dtype)
    rs = np.empty((bsz, t, hd), dtype=x.dtype)
    zs = np.empty((bsz, t, hd), dtype=x.dtype)
    ns = np.empty((bsz, t, hd), dtype=x.dtype)
    hnl = np.empty((bsz, t, hd), dtype=x.dtype)
    hprev = np.empty((bsz, t, hd), dtype=x.dtype)
    h = h0
    for i in range(t):
        gh = h @ w_hh.T + b_hh
        r = _sig(xp[:, i, :hd] + gh[:, :hd])
        z = _sig(xp[:, i, hd:2 * hd] + gh[:, hd:2 * hd])
        n = np.tanh(xp[:, i, 2 * hd:] + r * gh[:, 2 * hd:])
        hprev[:, i] = h
        h = (1.0 - z) * n + z * h
        seq[:, i], rs[:, i], zs[:, i], ns[:, i], hnl[:, i] = h, r, z, n, gh[:, 2 * hd:]
    return seq, (rs, zs, ns, hnl, hprev)


def _gru_bwd(x, w_ih, w_hh, cache, g_seq):
    rs, zs, ns, hnl, hprev = cache
    bsz, t, c = x.shape
    hd = w_hh.shape[1]
    gx = np.empty_like(x)
    gwi = np.zeros_like(w_ih)
    gwh = np.zeros_like(w_hh)
    gbi = np.zeros(3 * hd, dtype=x.dtype)
    gbh = np.zeros(3 * hd, dtype=x.dtype)
    gh = np.zeros((bsz, hd), dtype=x.dtype)
    gi = np.empty((bsz, 3 * hd), dtype=x.dtype)
    gl = np.empty((bsz, 3 * hd), dtype=x.dtype)
    for i in reversed(range(t)):
        gh = gh + g_seq[:, i]
        r, z, n, lin, hp = rs[:, i], zs[:, i], ns[:, i], hnl[:, i], hprev[:, i]
        gz = gh * (hp - n)
        gpre_n = gh * (1.0 - z) * (1.0 - n * n)
        gh_direct = gh * z
        g_lin = gpre_n * r
        gpre_r = gpre_n * lin * r * (1.0 - r)
        gpre_z = gz * z * (1.0 - z)
        gi[:, :hd], gi[:, hd:2 * hd], gi[:, 2 * hd:] = gpre_r, gpre_z, gpre_n
        gl[:, :hd], gl[:, hd:2 * hd], gl[:, 2 * hd:] = gpre_r, gpre_z, g_lin
        gx[:, i] = gi @ w_ih
        gwi += gi.T @ x[:, i]
        gbi += gi.sum(axis=0)
        gwh += gl.T @ hp
        gbh += gl.sum(axis=0)
        gh = gh_direct + gl @ w_hh
    return gx, gwi, gwh, gbi, gbh, gh


def _sig(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out
