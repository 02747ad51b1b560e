"""Quality-predicting discriminator: maps a (clean, other) waveform pair to
a bounded score approximating a normalized perceptual quality metric.

Four strided conv blocks with instance norm and PReLU, adaptive max pooling
to a fixed length, two linear layers, and a learnable sigmoid whose positive
slope is itself trained.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nnops
from .nnops import ShapeError
from .tensor import Tensor, concat


@dataclass(frozen=True)
class DiscriminatorConfig:
    block_channels: tuple[int, int, int, int] = (16, 32, 64, 128)
    kernel: int = 15
    stride: int = 2
    pooled_len: int = 16
    linear_hidden: int = 64
    sigma_max: float = 1.2

    def __post_init__(self):
        if len(self.block_channels) != 4:
            raise ValueError("discriminator uses exactly four conv blocks")
        if self.kernel < 1 or self.stride < 1 or self.pooled_len < 1:
            raise ValueError("kernel, stride and pooled_len must be >= 1")
        if self.sigma_max <= 0:
            raise ValueError("sigma_max must be positive")

    @property
    def flat_width(self) -> int:
        return self.block_channels[-1] * self.pooled_len


class Discriminator:
    def __init__(self, cfg: DiscriminatorConfig = DiscriminatorConfig(),
                 seed: int = 0, dtype=np.float32):
        self.cfg = cfg
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        c_in = 2
        for i, ch in enumerate(cfg.block_channels):
            bound = 1.0 / np.sqrt(c_in * cfg.kernel)
            self.params[f"block{i}.conv.w"] = Tensor(
                rng.uniform(-bound, bound, (ch, c_in, cfg.kernel)).astype(self.dtype),
                requires_grad=True)
            self.params[f"block{i}.conv.b"] = Tensor(
                rng.uniform(-bound, bound, ch).astype(self.dtype), requires_grad=True)
            self.params[f"block{i}.norm.gamma"] = Tensor(np.ones(ch, dtype=self.dtype),
                                                         requires_grad=True)
            self.params[f"block{i}.norm.beta"] = Tensor(np.zeros(ch, dtype=self.dtype),
                                                        requires_grad=True)
            self.params[f"block{i}.prelu"] = Tensor(np.full(ch, 0.25, dtype=self.dtype),
                                                    requires_grad=True)
            c_in = ch
        flat = cfg.flat_width
        for name, (out, inp) in {"fc1": (cfg.linear_hidden, flat),
                                 "fc2": (1, cfg.linear_hidden)}.items():
            bound = 1.0 / np.sqrt(inp)
            self.params[f"{name}.w"] = Tensor(
                rng.uniform(-bound, bound, (out, inp)).astype(self.dtype), requires_grad=True)
            self.params[f"{name}.b"] = Tensor(
                rng.uniform(-bound, bound, out).astype(self.dtype), requires_grad=True)
        self.params["fc1.prelu"] = Tensor(np.full(1, 0.25, dtype=self.dtype),
                                          requires_grad=True)
        self.params["sigmoid.slope"] = Tensor(np.ones(1, dtype=self.dtype),
                                              requires_grad=True)

    def forward(self, clean: Tensor, other: Tensor) -> Tensor:
        """Score each pair in the batch: [B,1,T] x [B,1,T] -> [B] in (0, sigma_max)."""
        return disc_forward(clean, other, self.params, self.cfg)

    def __call__(self, clean, other):
        return self.forward(clean, other)

    def param_count(self) -> int:
        return sum(p.data.size for p in self.params.values())


def disc_forward(clean: Tensor, other: Tensor, params: dict[str, Tensor],
                 cfg: DiscriminatorConfig) -> Tensor:
    if not isinstance(clean, Tensor):
        clean = Tensor(clean)
    if not isinstance(other, Tensor):
        other = Tensor(other)
    if clean.shape != other.shape:
        raise ShapeError(f"pair length mismatch: {clean.shape} vs {other.shape}")
    if clean.ndim != 3 or clean.shape[1] != 1:
        raise ShapeError(f"expected mono [B,1,T] pairs, got {clean.shape}")
    h = concat([clean, other], axis=1)
    for i in range(4):
        h = nnops.conv1d_causal(h, params[f"block{i}.conv.w"], params[f"block{i}.conv.b"],
                                stride=cfg.stride)
        h = nnops.instance_norm1d(h, params[f"block{i}.norm.gamma"],
                                  params[f"block{i}.norm.beta"])
        h = nnops.prelu(h, params[f"block{i}.prelu"])
    h = nnops.adaptive_max_pool_time(h, cfg.pooled_len)
    b = h.shape[0]
    h = h.reshape(b, cfg.flat_width)
    h = nnops.prelu(nnops.linear(h, params["fc1.w"], params["fc1.b"]), params["fc1.prelu"])
    v = nnops.linear(h, params["fc2.w"], params["fc2.b"])          # [B,1]
    slope = params["sigmoid.slope"].clamp_min(1e-4)  # keeps the slope positive
    score = (v * slope).sigmoid() * cfg.sigma_max
    return score.reshape(b)
