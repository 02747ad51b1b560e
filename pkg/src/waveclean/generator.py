"""Causal wave U-Net enhancer: strided-conv encoder layers with multi-scale
residual groups and squeeze-excitation gating, a two-layer GRU bottleneck,
and a mirrored transposed-conv decoder with additive skip connections.

Offline forward (training / file denoising) and a chunked streaming path
that reproduces the offline streaming-statistics mode.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import nnops
from .kernels import conv1d_fwd, convt1d_fwd
from .nnops import ShapeError
from .tensor import Tensor, concat, no_grad


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    layers: int = 8            # encoder/decoder depth
    hidden: int = 64           # channels out of the first encoder layer
    max_channels: int = 128    # channel cap deeper in the stack
    kernel: int = 4
    stride: int = 2
    res2_scale: int = 4        # channel groups inside the residual block
    res2_kernel: int = 3
    res2_dilation: int = 2
    seb_ratio: int = 8         # squeeze-excitation bottleneck ratio
    normalize_input: bool = True

    def __post_init__(self):
        if min(self.layers, self.hidden, self.kernel, self.stride) < 1:
            raise ConfigError("layers, hidden, kernel and stride must be >= 1")
        if self.kernel < self.stride:
            raise ConfigError(f"kernel {self.kernel} < stride {self.stride}")
        if min(self.res2_scale, self.res2_kernel, self.res2_dilation, self.seb_ratio) < 1:
            raise ConfigError("res2/seb hyperparameters must be >= 1")
        for i in range(1, self.layers + 1):
            ch = self.channels(i)
            if ch % self.res2_scale:
                raise ConfigError(
                    f"layer {i} channels {ch} not divisible by res2_scale {self.res2_scale}")
            if ch % self.seb_ratio:
                raise ConfigError(
                    f"layer {i} channels {ch} not divisible by seb_ratio {self.seb_ratio}")

    @classmethod
    def lite(cls, **kw) -> "GeneratorConfig":
        return cls(**kw)

    @classmethod
    def heavy(cls, **kw) -> "GeneratorConfig":
        kw.setdefault("max_channels", 768)
        return cls(**kw)

    def channels(self, i: int) -> int:
        """Output channels of encoder layer i (1-based): min(2^(i-1)*H, C_m)."""
        return min(2 ** (i - 1) * self.hidden, self.max_channels)

    @property
    def channel_schedule(self) -> list[int]:
        return [self.channels(i) for i in range(1, self.layers + 1)]

    @property
    def block(self) -> int:
        """Samples per latent frame: stride**layers."""
        return self.stride ** self.layers

    @property
    def gru_hidden(self) -> int:
        # equals max_channels whenever the schedule reaches the cap
        return self.channels(self.layers)


# -- building blocks -----------------------------------------------------------


def res2_forward(y: Tensor, blocks: list[dict], scale: int, dilation: int = 2,
                 train: bool = False) -> Tensor:
    """Hierarchical residual multi-scale block.

    Splits channels into `scale` groups; group 1 passes through, each further
    group goes through causal conv -> ReLU -> BN, fed by its input plus the
    previous group's output. `blocks` holds the scale-1 conv/BN parameter dicts
    (keys: w, b, gamma, beta, mean, var).
    """
    c = y.shape[1]
    if c % scale:
        raise ShapeError(f"res2_forward: {c} channels not divisible by scale {scale}")
    if len(blocks) != scale - 1:
        raise ShapeError(f"res2_forward: expected {scale - 1} conv blocks, got {len(blocks)}")
    g = c // scale
    parts = [y[:, :g, :]]
    prev = None
    for j in range(1, scale):
        inp = y[:, j * g:(j + 1) * g, :]
        if prev is not None:
            inp = inp + prev
        blk = blocks[j - 1]
        h = nnops.conv1d_causal(inp, blk["w"], blk["b"], stride=1, dilation=dilation)
        h = h.relu()
        h = nnops.batch_norm1d(h, blk["gamma"], blk["beta"], blk["mean"], blk["var"], train)
        parts.append(h)
        prev = h
    return concat(parts, axis=1)


def se_forward(h: Tensor, w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor,
               running: bool = False) -> Tensor:
    """Squeeze-excitation gate: per-channel weights from the time-pooled
    descriptor, multiplied back over time.

    running=True replaces the global time average by a causal running mean,
    giving a per-timestep excitation (the streaming-compatible variant).
    """
    if h.shape[1] != w1.shape[1]:
        raise ShapeError(f"se_forward: {h.shape[1]} channels vs w1 width {w1.shape[1]}")
    if running:
        t = h.shape[2]
        counts = np.arange(1, t + 1, dtype=h.dtype).reshape(1, 1, t)
        squeeze = nnops.cumsum_time(h) * Tensor(1.0 / counts)   # [B,C,T]
        desc = squeeze.transpose(0, 2, 1)                        # [B,T,C]
        excite = nnops.linear(nnops.linear(desc, w1, b1).relu(), w2, b2).sigmoid()
        return h * excite.transpose(0, 2, 1)
    squeeze = nnops.global_avg_pool_time(h)                      # [B,C]
    excite = nnops.linear(nnops.linear(squeeze, w1, b1).relu(), w2, b2).sigmoid()
    b, c = excite.shape
    return h * excite.reshape(b, c, 1)


def encoder_layer_forward(x: Tensor, layer: dict, cfg: GeneratorConfig,
                          train: bool = False, streaming_stats: bool = False) -> Tensor:
    """One encoder layer: strided causal conv -> ReLU -> res2 -> SE ->
    1x1 conv doubling channels -> GLU halving back. Time shrinks by stride."""
    h = nnops.conv1d_causal(x, layer["down_w"], layer["down_b"], stride=cfg.stride)
    h = h.relu()
    h = res2_forward(h, layer["res2"], cfg.res2_scale, cfg.res2_dilation,
                     train=train and not streaming_stats)
    h = se_forward(h, layer["se_w1"], layer["se_b1"], layer["se_w2"], layer["se_b2"],
                   running=streaming_stats)
    h = nnops.conv1d_causal(h, layer["mix_w"], layer["mix_b"])
    return nnops.glu(h)


def decoder_layer_forward(x: Tensor, layer: dict, cfg: GeneratorConfig,
                          last: bool) -> Tensor:
    """One decoder layer: 1x1 conv -> GLU -> causal transposed conv, with a
    ReLU after every layer except the final (linear) output."""
    h = nnops.conv1d_causal(x, layer["mix_w"], layer["mix_b"])
    h = nnops.glu(h)
    h = nnops.conv_transpose1d_causal(h, layer["up_w"], layer["up_b"], stride=cfg.stride)
    return h if last else h.relu()


# -- the model -------------------------------------------------------------------


class Generator:
    """Owns the named parameter/buffer dicts and the forward paths."""

    def __init__(self, cfg: GeneratorConfig, seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self._init_weights(np.random.default_rng(seed))

    # parameter construction
    #
    # Gains are balanced so a unit-RMS input keeps roughly unit RMS through
    # the whole stack at init (ReLU-style sqrt(6/fan) bounds for conv/linear,
    # extra gain on the gated 1x1 convs to offset the GLU halving, and the
    # excitation gate biased open); without this the gated U-Net attenuates
    # activations per layer and training stalls in a quiet-output basin.

    def _add(self, name, rng, shape, bound):
        self.params[name] = Tensor(
            rng.uniform(-bound, bound, size=shape).astype(self.dtype), requires_grad=True)

    def _init_weights(self, rng):
        cfg = self.cfg
        k, s = cfg.kernel, cfg.res2_scale
        bias_bound = 1e-3
        c_in = 1
        for i in range(cfg.layers):
            ch = cfg.channels(i + 1)
            g = ch // s
            self._add(f"enc{i}.down.w", rng, (ch, c_in, k), np.sqrt(6.0 / (c_in * k)))
            self._add(f"enc{i}.down.b", rng, (ch,), bias_bound)
            for j in range(2, s + 1):
                self._add(f"enc{i}.res2.k{j}.w", rng, (g, g, cfg.res2_kernel),
                          np.sqrt(6.0 / (g * cfg.res2_kernel)))
                self._add(f"enc{i}.res2.k{j}.b", rng, (g,), bias_bound)
                self.params[f"enc{i}.res2.k{j}.gamma"] = Tensor(
                    np.ones(g, dtype=self.dtype), requires_grad=True)
                self.params[f"enc{i}.res2.k{j}.beta"] = Tensor(
                    np.zeros(g, dtype=self.dtype), requires_grad=True)
                self.buffers[f"enc{i}.res2.k{j}.mean"] = np.zeros(g, dtype=np.float32)
                self.buffers[f"enc{i}.res2.k{j}.var"] = np.ones(g, dtype=np.float32)
            r = ch // cfg.seb_ratio
            self._add(f"enc{i}.se.w1", rng, (r, ch), np.sqrt(6.0 / ch))
            self._add(f"enc{i}.se.b1", rng, (r,), bias_bound)
            self._add(f"enc{i}.se.w2", rng, (ch, r), np.sqrt(6.0 / r))
            self.params[f"enc{i}.se.b2"] = Tensor(
                np.full(ch, 2.0, dtype=self.dtype), requires_grad=True)  # gate starts open
            self._add(f"enc{i}.mix.w", rng, (2 * ch, ch, 1), np.sqrt(9.0 / ch))
            self._add(f"enc{i}.mix.b", rng, (2 * ch,), bias_bound)
            c_in = ch
        hd = cfg.gru_hidden
        for layer in range(2):
            cin = cfg.channels(cfg.layers) if layer == 0 else hd
            bound = 1.0 / np.sqrt(hd)
            self._add(f"gru{layer}.w_ih", rng, (3 * hd, cin), bound)
            self._add(f"gru{layer}.w_hh", rng, (3 * hd, hd), bound)
            self._add(f"gru{layer}.b_ih", rng, (3 * hd,), bound)
            self._add(f"gru{layer}.b_hh", rng, (3 * hd,), bound)
        for j in range(cfg.layers):
            c = cfg.channels(cfg.layers - j)
            c_out = cfg.channels(cfg.layers - j - 1) if j < cfg.layers - 1 else 1
            self._add(f"dec{j}.mix.w", rng, (2 * c, c, 1), np.sqrt(6.0 / c))
            self._add(f"dec{j}.mix.b", rng, (2 * c,), bias_bound)
            fan_t = max(1, c * k // cfg.stride)
            gain = 2.0 if j < cfg.layers - 1 else 1.0  # final layer is linear
            self._add(f"dec{j}.up.w", rng, (c, c_out, k), np.sqrt(gain / fan_t))
            self._add(f"dec{j}.up.b", rng, (c_out,), bias_bound)

    def _enc_view(self, i):
        p, b = self.params, self.buffers
        return {
            "down_w": p[f"enc{i}.down.w"], "down_b": p[f"enc{i}.down.b"],
            "res2": [
                {"w": p[f"enc{i}.res2.k{j}.w"], "b": p[f"enc{i}.res2.k{j}.b"],
                 "gamma": p[f"enc{i}.res2.k{j}.gamma"], "beta": p[f"enc{i}.res2.k{j}.beta"],
                 "mean": b[f"enc{i}.res2.k{j}.mean"], "var": b[f"enc{i}.res2.k{j}.var"]}
                for j in range(2, self.cfg.res2_scale + 1)
            ],
            "se_w1": p[f"enc{i}.se.w1"], "se_b1": p[f"enc{i}.se.b1"],
            "se_w2": p[f"enc{i}.se.w2"], "se_b2": p[f"enc{i}.se.b2"],
            "mix_w": p[f"enc{i}.mix.w"], "mix_b": p[f"enc{i}.mix.b"],
        }

    def _dec_view(self, j):
        p = self.params
        return {"mix_w": p[f"dec{j}.mix.w"], "mix_b": p[f"dec{j}.mix.b"],
                "up_w": p[f"dec{j}.up.w"], "up_b": p[f"dec{j}.up.b"]}

    # forward paths

    def encode(self, x: Tensor, train: bool = False,
               streaming_stats: bool = False) -> list[Tensor]:
        """Run the encoder stack; returns every layer's output (deepest last)."""
        skips = []
        h = x
        for i in range(self.cfg.layers):
            h = encoder_layer_forward(h, self._enc_view(i), self.cfg,
                                      train=train, streaming_stats=streaming_stats)
            skips.append(h)
        return skips

    def bottleneck(self, z: Tensor) -> Tensor:
        seq = z.transpose(0, 2, 1)
        for layer in range(2):
            p = self.params
            seq, _ = nnops.gru_layer(seq, p[f"gru{layer}.w_ih"], p[f"gru{layer}.w_hh"],
                                     p[f"gru{layer}.b_ih"], p[f"gru{layer}.b_hh"])
        return seq.transpose(0, 2, 1)

    def forward(self, x: Tensor, train: bool = False,
                streaming_stats: bool = False) -> Tensor:
        """Enhance [B,1,T] -> [B,1,T] for any T >= 1 (internal pad and trim).

        streaming_stats=True selects the causal statistics variants (running
        SE means, stored BN stats, no utterance-level input normalization);
        chunked streaming reproduces this mode exactly.
        """
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if x.ndim != 3 or x.shape[1] != 1:
            raise ShapeError(f"generator expects mono [B,1,T], got {x.shape}")
        if train and streaming_stats:
            raise ValueError("streaming statistics are an inference-only mode")
        cfg = self.cfg
        t = x.shape[2]
        sigma = None
        if cfg.normalize_input and not streaming_stats:
            mu = x.mean(axis=(1, 2), keepdims=True)
            sigma = (((x - mu) ** 2).mean(axis=(1, 2), keepdims=True)).sqrt() + 1e-8
            x = x / sigma
        pad = (-t) % cfg.block
        h = nnops.pad_time_left(x, pad)
        skips = self.encode(h, train=train, streaming_stats=streaming_stats)
        h = self.bottleneck(skips[-1])
        for j in range(cfg.layers):
            h = h + skips[cfg.layers - 1 - j]
            h = decoder_layer_forward(h, self._dec_view(j), cfg, last=j == cfg.layers - 1)
        out = h[:, :, pad:] if pad else h
        if sigma is not None:
            out = out * sigma
        return out

    def __call__(self, x, **kw):
        return self.forward(x, **kw)

    def stream(self) -> "GeneratorStream":
        return GeneratorStream(self)

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())


# -- streaming -----------------------------------------------------------------


class ChunkError(ValueError):
    pass


class GeneratorStream:
    """Stateful chunked inference; chunks must be multiples of cfg.block.

    Matches Generator.forward(..., streaming_stats=True) on the concatenated
    signal to float32 rounding. All state lives in `self.state` as ndarrays.
    """

    def __init__(self, gen: Generator):
        self.gen = gen
        cfg = gen.cfg
        self.state: dict[str, np.ndarray] = {"samples": np.zeros(1, dtype=np.int64)}
        c_in = 1
        for i in range(cfg.layers):
            ch = cfg.channels(i + 1)
            g = ch // cfg.res2_scale
            ctx = (cfg.kernel - 1)
            self.state[f"enc{i}.down"] = np.zeros((1, c_in, ctx), dtype=np.float32)
            rctx = (cfg.res2_kernel - 1) * cfg.res2_dilation
            for j in range(2, cfg.res2_scale + 1):
                self.state[f"enc{i}.res2.k{j}"] = np.zeros((1, g, rctx), dtype=np.float32)
            self.state[f"enc{i}.se.sum"] = np.zeros(ch, dtype=np.float64)
            self.state[f"enc{i}.se.count"] = np.zeros(1, dtype=np.int64)
            c_in = ch
        for layer in range(2):
            self.state[f"gru{layer}.h"] = np.zeros((1, cfg.gru_hidden), dtype=np.float32)
        for j in range(cfg.layers):
            c = cfg.channels(cfg.layers - j)
            c_out = cfg.channels(cfg.layers - j - 1) if j < cfg.layers - 1 else 1
            self.state[f"dec{j}.carry"] = np.zeros(
                (1, c_out, cfg.kernel - cfg.stride), dtype=np.float32)

    def _buffered_conv(self, x, w, b, stride, dilation, key):
        joined = np.concatenate([self.state[key], x], axis=2)
        ctx = self.state[key].shape[2]
        if ctx:
            self.state[key] = np.ascontiguousarray(joined[:, :, -ctx:])
        return conv1d_fwd(joined, w, b, stride, dilation, 0)

    def process(self, chunk: np.ndarray) -> np.ndarray:
        """Enhance one chunk (float waveform, length a multiple of cfg.block)."""
        cfg = self.gen.cfg
        chunk = np.asarray(chunk, dtype=np.float32).reshape(-1)
        if chunk.size == 0 or chunk.size % cfg.block:
            raise ChunkError(
                f"chunk length {chunk.size} is not a positive multiple of {cfg.block}")
        p = {k: v.data for k, v in self.gen.params.items()}
        buf = self.gen.buffers
        h = chunk.reshape(1, 1, -1)
        skips = []
        for i in range(cfg.layers):
            h = self._buffered_conv(h, p[f"enc{i}.down.w"], p[f"enc{i}.down.b"],
                                    cfg.stride, 1, f"enc{i}.down")
            np.maximum(h, 0.0, out=h)
            h = self._res2_stream(h, i, p, buf)
            h = self._se_stream(h, i, p)
            h = conv1d_fwd(h, p[f"enc{i}.mix.w"], p[f"enc{i}.mix.b"], 1, 1, 0)
            c = h.shape[1] // 2
            h = h[:, :c, :] * _np_sigmoid(h[:, c:, :])
            skips.append(h)
        seq = np.ascontiguousarray(h.transpose(0, 2, 1))
        for layer in range(2):
            seq, _ = nnops._gru_fwd(seq, p[f"gru{layer}.w_ih"], p[f"gru{layer}.w_hh"],
                                    p[f"gru{layer}.b_ih"], p[f"gru{layer}.b_hh"],
                                    self.state[f"gru{layer}.h"])
            self.state[f"gru{layer}.h"] = seq[:, -1, :].copy()
        h = np.ascontiguousarray(seq.transpose(0, 2, 1))
        for j in range(cfg.layers):
            h = h + skips[cfg.layers - 1 - j]
            h = conv1d_fwd(h, p[f"dec{j}.mix.w"], p[f"dec{j}.mix.b"], 1, 1, 0)
            c = h.shape[1] // 2
            h = h[:, :c, :] * _np_sigmoid(h[:, c:, :])
            full = convt1d_fwd(h, p[f"dec{j}.up.w"], None, cfg.stride, 0)
            carry = self.state[f"dec{j}.carry"]
            overlap = carry.shape[2]
            if overlap:
                full[:, :, :overlap] += carry
            emit_len = h.shape[2] * cfg.stride
            self.state[f"dec{j}.carry"] = full[:, :, emit_len:].copy()
            h = full[:, :, :emit_len] + p[f"dec{j}.up.b"][None, :, None]
            if j < cfg.layers - 1:
                np.maximum(h, 0.0, out=h)
        self.state["samples"] += chunk.size
        return h[0, 0].copy()

    def _res2_stream(self, y, i, p, buf):
        cfg = self.gen.cfg
        s = cfg.res2_scale
        g = y.shape[1] // s
        parts = [y[:, :g, :]]
        prev = None
        for j in range(2, s + 1):
            inp = y[:, (j - 1) * g: j * g, :]
            if prev is not None:
                inp = inp + prev
            h = self._buffered_conv(np.ascontiguousarray(inp),
                                    p[f"enc{i}.res2.k{j}.w"], p[f"enc{i}.res2.k{j}.b"],
                                    1, cfg.res2_dilation, f"enc{i}.res2.k{j}")
            np.maximum(h, 0.0, out=h)
            mean = buf[f"enc{i}.res2.k{j}.mean"]
            var = buf[f"enc{i}.res2.k{j}.var"]
            scale = (p[f"enc{i}.res2.k{j}.gamma"] / np.sqrt(var + nnops.NORM_EPS)).astype(np.float32)
            shift = (p[f"enc{i}.res2.k{j}.beta"] - mean * scale).astype(np.float32)
            h = h * scale[None, :, None] + shift[None, :, None]
            parts.append(h)
            prev = h
        return np.concatenate(parts, axis=1)

    def _se_stream(self, h, i, p):
        run = np.cumsum(h[0].astype(np.float64), axis=1) + self.state[f"enc{i}.se.sum"][:, None]
        count0 = int(self.state[f"enc{i}.se.count"][0])
        t = h.shape[2]
        counts = np.arange(count0 + 1, count0 + t + 1, dtype=np.float32)
        squeeze = run.astype(np.float32) * (1.0 / counts)      # [C, T]
        z = np.maximum(p[f"enc{i}.se.w1"] @ squeeze + p[f"enc{i}.se.b1"][:, None], 0.0)
        excite = _np_sigmoid(p[f"enc{i}.se.w2"] @ z + p[f"enc{i}.se.b2"][:, None])
        self.state[f"enc{i}.se.sum"] = run[:, -1].copy()
        self.state[f"enc{i}.se.count"] += t
        return h * excite[None]

    # state snapshots

    def state_bytes(self) -> bytes:
        out = io.BytesIO()
        np.savez(out, **self.state)
        return out.getvalue()

    def load_state_bytes(self, blob: bytes) -> None:
        with np.load(io.BytesIO(blob)) as data:
            loaded = {k: data[k].copy() for k in data.files}
        if set(loaded) != set(self.state):
            missing = set(self.state) ^ set(loaded)
            raise ValueError(f"stream state keys do not match: {sorted(missing)}")
        for k, v in loaded.items():
            if v.shape != self.state[k].shape:
                raise ValueError(f"stream state {k!r}: shape {v.shape} != {self.state[k].shape}")
        self.state = loaded


def _np_sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out
