"""Closed-form parameter and multiply-accumulate accounting per layer, plus
the wall-clock real-time-factor benchmark.

Parameter formulas must agree exactly with the scalars the models allocate
(the test suite enumerates allocations as the oracle). MACS counts multiply-
accumulates for a reference input length; activations and normalizations
count zero, biases are not counted, and the per-utterance squeeze/excitation
projections are counted once (offline-pooling convention).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .discriminator import DiscriminatorConfig
from .generator import Generator, GeneratorConfig
from .tensor import Tensor, no_grad


@dataclass(frozen=True)
class FootprintRow:
    name: str
    params: int
    macs: int


@dataclass
class FootprintReport:
    rows: list[FootprintRow]
    input_seconds: float
    sample_rate: int

    @property
    def total_params(self) -> int:
        return sum(r.params for r in self.rows)

    @property
    def total_macs(self) -> int:
        return sum(r.macs for r in self.rows)

    def format(self) -> str:
        lines = ["layer\tparams\tmacs"]
        lines += [f"{r.name}\t{r.params}\t{r.macs}" for r in self.rows]
        lines.append(f"TOTAL\t{self.total_params}\t{self.total_macs}")
        lines.append(f"# macs for {self.input_seconds:g} s at {self.sample_rate} Hz"
                     f" ({self.total_macs / 1e9:.3f} GMACS,"
                     f" {self.total_params / 1e6:.3f}M params)")
        return "\n".join(lines)


def count_params(cfg) -> FootprintReport:
    """Analytic per-layer parameter counts (MACS included for 1 s of audio)."""
    return count_macs(cfg, input_seconds=1.0)


def count_macs(cfg, input_seconds: float = 1.0, sample_rate: int = 16000) -> FootprintReport:
    if isinstance(cfg, GeneratorConfig):
        return _generator_footprint(cfg, input_seconds, sample_rate)
    if isinstance(cfg, DiscriminatorConfig):
        return _discriminator_footprint(cfg, input_seconds, sample_rate)
    raise TypeError(f"unsupported config type {type(cfg).__name__}")


def _generator_footprint(cfg: GeneratorConfig, seconds: float, rate: int) -> FootprintReport:
    t = int(round(seconds * rate))
    padded = t + (-t) % cfg.block
    rows = []
    k, s = cfg.kernel, cfg.res2_scale
    c_in = 1
    t_cur = padded
    for i in range(1, cfg.layers + 1):
        ch = cfg.channels(i)
        g = ch // s
        t_out = t_cur // cfg.stride
        rows.append(FootprintRow(f"enc{i - 1}.down", ch * c_in * k + ch,
                                 ch * c_in * k * t_out))
        rows.append(FootprintRow(
            f"enc{i - 1}.res2",
            (s - 1) * (g * g * cfg.res2_kernel + g + 2 * g),
            (s - 1) * g * g * cfg.res2_kernel * t_out))
        r = ch // cfg.seb_ratio
        rows.append(FootprintRow(f"enc{i - 1}.se",
                                 (r * ch + r) + (ch * r + ch),
                                 2 * ch * r))
        rows.append(FootprintRow(f"enc{i - 1}.mix", 2 * ch * ch + 2 * ch,
                                 2 * ch * ch * t_out))
        c_in = ch
        t_cur = t_out
    hd = cfg.gru_hidden
    gru_in = cfg.channels(cfg.layers)
    for layer in range(2):
        cin = gru_in if layer == 0 else hd
        rows.append(FootprintRow(f"gru{layer}",
                                 3 * (hd * cin + hd * hd + 2 * hd),
                                 3 * hd * (cin + hd) * t_cur))
    for j in range(cfg.layers):
        c = cfg.channels(cfg.layers - j)
        c_out = cfg.channels(cfg.layers - j - 1) if j < cfg.layers - 1 else 1
        t_out = t_cur * cfg.stride
        rows.append(FootprintRow(f"dec{j}.mix", 2 * c * c + 2 * c,
                                 2 * c * c * t_cur))
        rows.append(FootprintRow(f"dec{j}.up", c * c_out * k + c_out,
                                 c * c_out * k * t_out))
        t_cur = t_out
    return FootprintReport(rows, seconds, rate)


def _discriminator_footprint(cfg: DiscriminatorConfig, seconds: float,
                             rate: int) -> FootprintReport:
    t_cur = int(round(seconds * rate))
    rows = []
    c_in = 2
    for i, ch in enumerate(cfg.block_channels):
        t_out = -(-t_cur // cfg.stride)  # causal conv yields ceil(T / stride)
        rows.append(FootprintRow(
            f"block{i}",
            (ch * c_in * cfg.kernel + ch) + 2 * ch + ch,
            ch * c_in * cfg.kernel * t_out))
        c_in = ch
        t_cur = t_out
    flat = cfg.flat_width
    rows.append(FootprintRow("fc1", cfg.linear_hidden * flat + cfg.linear_hidden + 1,
                             cfg.linear_hidden * flat))
    rows.append(FootprintRow("fc2", cfg.linear_hidden + 1 + 1,
                             cfg.linear_hidden))
    return FootprintReport(rows, seconds, rate)


# -- wall-clock benchmark --------------------------------------------------------


@dataclass
class RtfResult:
    runs: int
    times: list[float] = field(default_factory=list)
    mean_time: float = 0.0
    rtf: float = 0.0
    input_seconds: float = 1.0
    sample_rate: int = 16000
    backend: str = ""

    def format(self) -> str:
        per_run = ", ".join(f"{t * 1e3:.1f}" for t in self.times)
        return (f"runs={self.runs} input={self.input_seconds:g}s"
                f"@{self.sample_rate}Hz backend={self.backend}\n"
                f"times_ms=[{per_run}]\n"
                f"mean_ms={self.mean_time * 1e3:.1f} rtf={self.rtf:.4f}")


def rtf_bench(gen: Generator, runs: int = 5, seconds: float = 1.0,
              sample_rate: int = 16000, seed: int = 0) -> RtfResult:
    """Time offline enhancement of random input: `runs` timed passes after one
    discarded warmup; RTF = mean wall time / audio duration."""
    from . import kernels

    rng = np.random.default_rng(seed)
    t = int(round(seconds * sample_rate))
    x = Tensor(rng.uniform(-0.5, 0.5, size=(1, 1, t)).astype(np.float32))
    times = []
    with no_grad():
        gen.forward(x)  # warmup, discarded
        for _ in range(runs):
            start = time.perf_counter()
            gen.forward(x)
            times.append(time.perf_counter() - start)
    mean_time = float(np.mean(times))
    return RtfResult(runs=runs, times=times, mean_time=mean_time,
                     rtf=mean_time / seconds, input_seconds=seconds,
                     sample_rate=sample_rate, backend=kernels.active_backend())
