"""Fourier analysis: STFT magnitudes, the multi-resolution spectral loss,
and the scale-invariant SNR metric.

The spectral loss is differentiable through the tape (used as a training
loss); ``si_snr`` is a plain metric on ndarrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class StftResolution:
    """One STFT parameterization: transform size, hop and analysis window."""

    fft_size: int
    hop: int
    win_length: int

    def __post_init__(self):
        if self.fft_size < 2 or self.fft_size & (self.fft_size - 1):
            raise ValueError(f"fft_size {self.fft_size} is not a power of two")
        if not (0 < self.hop <= self.win_length <= self.fft_size):
            raise ValueError(
                f"need hop <= win_length <= fft_size, got {self.hop}/{self.win_length}/{self.fft_size}"
            )

    @property
    def window(self) -> np.ndarray:
        """Periodic Hann window of win_length samples."""
        n = np.arange(self.win_length)
        return (0.5 - 0.5 * np.cos(2.0 * np.pi * n / self.win_length)).astype(np.float64)

    @property
    def bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class MrstftConfig:
    resolutions: tuple[StftResolution, ...] = field(
        default_factory=lambda: (
            StftResolution(512, 128, 512),
            StftResolution(1024, 256, 1024),
            StftResolution(2048, 512, 2048),
        )
    )
    log_floor: float = 1e-7

    def __post_init__(self):
        if len(self.resolutions) < 1:
            raise ValueError("need at least one resolution")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")


# -- FFT ----------------------------------------------------------------------


def fft(x: np.ndarray) -> np.ndarray:
    """DFT of a power-of-two-length vector."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"fft length {n} is not a power of two")
    return np.fft.fft(x)


def ifft(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"ifft length {n} is not a power of two")
    return np.fft.ifft(x)


# -- differentiable STFT pieces ------------------------------------------------


def reflect_pad(x: Tensor, pad: int) -> Tensor:
    """Reflect-pad a 1-D tensor by `pad` samples on both ends."""
    if x.ndim != 1:
        raise ValueError(f"reflect_pad expects 1-D input, got {x.shape}")
    t = x.shape[0]
    if pad >= t:
        raise ValueError(f"reflect pad {pad} too large for length {t}")
    idx = np.concatenate([np.arange(pad, 0, -1), np.arange(t), np.arange(t - 2, t - 2 - pad, -1)])

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        x._accumulate(gx)

    return Tensor._from_op(x.data[idx], (x,), bwd)


def frame_signal(x: Tensor, win_length: int, hop: int) -> Tensor:
    """Slice a padded 1-D tensor into overlapping frames [n_frames, win_length]."""
    t = x.shape[0]
    n_frames = 1 + (t - win_length) // hop
    starts = np.arange(n_frames) * hop
    idx = starts[:, None] + np.arange(win_length)[None, :]

    def bwd(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        x._accumulate(gx)

    return Tensor._from_op(np.ascontiguousarray(x.data[idx]), (x,), bwd)


def rfft_magnitude(frames: Tensor, fft_size: int) -> Tensor:
    """|rfft| of zero-padded frames: [n_frames, win] -> [n_frames, fft_size/2+1]."""
    win = frames.shape[1]
    spec = np.fft.rfft(frames.data, n=fft_size, axis=1)
    mag = np.abs(spec).astype(frames.dtype)

    def bwd(g):
        # d|X|/dX = X / |X|; route complex grad back through the transform.
        safe = np.maximum(mag, np.finfo(frames.dtype).tiny)
        gc = (g / safe) * spec
        full = np.zeros((frames.shape[0], fft_size), dtype=complex)
        full[:, : fft_size // 2 + 1] = gc
        gt = np.real(np.fft.ifft(full, axis=1)) * fft_size
        frames._accumulate(gt[:, :win].astype(frames.dtype))

    return Tensor._from_op(mag, (frames,), bwd)


def stft_magnitude(x: Tensor | np.ndarray, res: StftResolution) -> Tensor:
    """Linear-scale magnitude spectrogram [n_frames, bins] of a 1-D signal.

    Frames are Hann-windowed and centered (reflect padding of win_length/2 on
    both sides); meant for offline loss computation, not causal processing.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.ndim != 1:
        raise ValueError(f"stft_magnitude expects a 1-D signal, got {x.shape}")
    if x.shape[0] < res.win_length:
        raise ValueError(
            f"signal length {x.shape[0]} shorter than window {res.win_length}"
        )
    padded = reflect_pad(x, res.win_length // 2)
    frames = frame_signal(padded, res.win_length, res.hop)
    windowed = frames * Tensor(res.window.astype(x.dtype))
    return rfft_magnitude(windowed, res.fft_size)


# -- losses and metrics ---------------------------------------------------------


def mrstft_loss(x: Tensor | np.ndarray, x_hat: Tensor | np.ndarray,
                cfg: MrstftConfig = MrstftConfig()) -> Tensor:
    """Multi-resolution spectral loss: per resolution, the relative Frobenius
    distance between magnitude spectrograms plus an L1 log-magnitude term
    normalized by the waveform sample count.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if not isinstance(x_hat, Tensor):
        x_hat = Tensor(x_hat)
    if x.shape != x_hat.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x_hat.shape}")
    t = x.shape[0]
    total = None
    for res in cfg.resolutions:
        s_ref = stft_magnitude(x, res)
        s_est = stft_magnitude(x_hat, res)
        ref_norm = float(np.sqrt((s_ref.data ** 2).sum()))
        if ref_norm == 0.0:
            raise ValueError("reference signal is silent at some resolution")
        sc = ((s_ref - s_est) ** 2).sum().sqrt() / ref_norm
        log_l1 = (s_ref.clamp_min(cfg.log_floor).log()
                  - s_est.clamp_min(cfg.log_floor).log()).abs().sum() * (1.0 / t)
        term = sc + log_l1
        total = term if total is None else total + term
    return total


def si_snr(x: np.ndarray, x_hat: np.ndarray, cap: float = 40.0) -> float:
    """Scale-invariant SNR in dB, clipped to [-cap, cap]."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    x_hat = np.asarray(x_hat, dtype=np.float64).reshape(-1)
    if x.shape != x_hat.shape or x.size == 0:
        raise ValueError("si_snr needs two equal nonzero-length signals")
    energy = float(np.dot(x, x))
    if energy == 0.0:
        raise ValueError("si_snr reference has zero energy")
    alpha = float(np.dot(x_hat, x)) / energy
    target = alpha * x
    residual = x_hat - target
    e_target = float(np.dot(target, target))
    e_residual = float(np.dot(residual, residual))
    if e_residual == 0.0:
        return cap
    if e_target == 0.0:
        return -cap
    return float(np.clip(10.0 * np.log10(e_target / e_residual), -cap, cap))
