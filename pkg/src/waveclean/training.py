"""Losses, quality oracles, augmentations, and the desk-scale adversarial
training loop (alternating discriminator/generator steps under Adam with a
linear-warmup + cosine-decay schedule).
"""
from __future__ import annotations

import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .discriminator import Discriminator
from .dsp import MrstftConfig, mrstft_loss, si_snr
from .generator import Generator
from .optim import AdamState, adam_step, zero_grads
from .tensor import Tensor, concat, no_grad


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights for the L1, spectral and adversarial generator terms."""

    l1: float = 1.0
    spectral: float = 1.0
    adversarial: float = 0.05

    def __post_init__(self):
        if min(self.l1, self.spectral, self.adversarial) < 0:
            raise ValueError("loss weights must be non-negative")
        if self.l1 == self.spectral == self.adversarial == 0:
            raise ValueError("at least one loss weight must be positive")


@dataclass(frozen=True)
class MixupPolicy:
    """Beta distribution for the convex clean/enhanced mixing coefficient."""

    beta_a: float = 1.0
    beta_b: float = 1.0

    def __post_init__(self):
        if self.beta_a <= 0 or self.beta_b <= 0:
            raise ValueError("Beta parameters must be positive")

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.beta(self.beta_a, self.beta_b))


@dataclass
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 8
    crop_len: int = 2048
    peak_lr: float = 2e-4
    warmup_frac: float = 0.05
    seed: int = 0
    remix: bool = True
    bandmask: bool = True
    revecho: bool = False
    checkpoint_every: int = 0
    val_every: int = 0

    def __post_init__(self):
        if self.crop_len % 256:
            raise ValueError(f"crop_len {self.crop_len} must be a multiple of 256")
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be >= 1")
        if not 0 <= self.warmup_frac <= 1:
            raise ValueError("warmup_frac must lie in [0, 1]")


# -- quality oracles -------------------------------------------------------------


class SiSnrProxyOracle:
    """Logistic squash of SI-SNR onto [0, 1]; a documented stand-in for a real
    perceptual scorer. Normalized so the +40 dB cap (identical signals) maps
    to exactly 1."""

    def __init__(self, midpoint_db: float = 10.0, scale_db: float = 4.0, cap: float = 40.0):
        self.midpoint_db = midpoint_db
        self.scale_db = scale_db
        self.cap = cap
        self._top = 1.0 / (1.0 + np.exp(-(cap - midpoint_db) / scale_db))

    def score(self, clean: np.ndarray, other: np.ndarray) -> float:
        snr = si_snr(clean, other, cap=self.cap)
        q = 1.0 / (1.0 + np.exp(-(snr - self.midpoint_db) / self.scale_db))
        return float(np.clip(q / self._top, 0.0, 1.0))


class ExternalCommandOracle:
    """Adapter for an external scorer invoked as `cmd clean.wav other.wav`;
    it must print one float (a raw perceptual score in [-0.5, 4.5]) on stdout,
    which is mapped to [0, 1]."""

    def __init__(self, command: list[str], sample_rate: int = 16000):
        self.command = list(command)
        self.sample_rate = sample_rate

    def score(self, clean: np.ndarray, other: np.ndarray) -> float:
        from .wavio import AudioClip, wav_write

        with tempfile.TemporaryDirectory(prefix="waveclean-oracle-") as tmp:
            ref = Path(tmp) / "clean.wav"
            est = Path(tmp) / "other.wav"
            wav_write(ref, AudioClip(np.asarray(clean, dtype=np.float32), self.sample_rate))
            wav_write(est, AudioClip(np.asarray(other, dtype=np.float32), self.sample_rate))
            proc = subprocess.run(self.command + [str(ref), str(est)],
                                  capture_output=True, text=True, check=True)
        raw = float(proc.stdout.strip().split()[-1])
        return float(np.clip((raw + 0.5) / 5.0, 0.0, 1.0))


# -- losses ----------------------------------------------------------------------


def _as_batch(x) -> Tensor:
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if x.ndim == 1:
        x = x.reshape(1, x.shape[0])
    elif x.ndim == 3:
        x = x.reshape(x.shape[0], x.shape[2])
    return x


def generator_loss(clean, enhanced, disc_scores, weights: LossWeights = LossWeights(),
                   mrstft_cfg: MrstftConfig = MrstftConfig()) -> Tensor:
    """Weighted sum of mean L1 distance, multi-resolution spectral loss, and
    the adversarial pull of the discriminator scores toward 1."""
    x = _as_batch(clean)
    x_hat = _as_batch(enhanced)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    total = Tensor(np.zeros((), dtype=x_hat.dtype))
    if weights.l1:
        total = total + weights.l1 * (x - x_hat).abs().mean()
    if weights.spectral:
        b = x.shape[0]
        spec = None
        for i in range(b):
            term = mrstft_loss(x[i], x_hat[i], mrstft_cfg)
            spec = term if spec is None else spec + term
        total = total + (weights.spectral / b) * spec
    if weights.adversarial:
        if disc_scores is None:
            raise ValueError("adversarial weight set but no discriminator scores given")
        if not isinstance(disc_scores, Tensor):
            disc_scores = Tensor(disc_scores)
        total = total + weights.adversarial * ((disc_scores - 1.0) ** 2).mean()
    return total


def mixup(clean, enhanced, lam: float):
    """Convex combination lam*clean + (1-lam)*enhanced."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"mixup coefficient {lam} outside [0, 1]")
    if isinstance(clean, Tensor) or isinstance(enhanced, Tensor):
        a = clean if isinstance(clean, Tensor) else Tensor(clean)
        b = enhanced if isinstance(enhanced, Tensor) else Tensor(enhanced)
        return a * lam + b * (1.0 - lam)
    return lam * np.asarray(clean) + (1.0 - lam) * np.asarray(enhanced)


def discriminator_loss(clean, enhanced, mixed, disc_fn, oracle) -> Tensor:
    """Squared-error pull of the score network toward 1 on identical pairs and
    toward the oracle's quality on (clean, enhanced) and (clean, mixed)."""
    x = _as_batch(clean)
    x_hat = _as_batch(enhanced)
    x_mix = _as_batch(mixed)
    b, t = x.shape
    q_hat = np.array([oracle.score(x.data[i], x_hat.data[i]) for i in range(b)],
                     dtype=x.dtype)
    q_mix = np.array([oracle.score(x.data[i], x_mix.data[i]) for i in range(b)],
                     dtype=x.dtype)
    # One batched evaluation of the three pair kinds (scores are batch-equivariant).
    ref = concat([x, x, x], axis=0).reshape(3 * b, 1, t)
    others = concat([x, x_hat, x_mix], axis=0).reshape(3 * b, 1, t)
    scores = disc_fn(ref, others)
    s_cc, s_ce, s_cm = scores[:b], scores[b:2 * b], scores[2 * b:]
    return (((s_cc - 1.0) ** 2).mean()
            + ((s_ce - Tensor(q_hat)) ** 2).mean()
            + ((s_cm - Tensor(q_mix)) ** 2).mean())


def lr_schedule(step: int, total: int, peak: float = 2e-4,
                warmup_frac: float = 0.05) -> float:
    """Linear ramp 0 -> peak over the warmup steps, then cosine decay to 0."""
    if not 0 <= step <= total:
        raise ValueError(f"step {step} outside [0, {total}]")
    warmup = max(1, int(round(warmup_frac * total)))
    if step <= warmup:
        return peak * step / warmup
    progress = (step - warmup) / (total - warmup)
    return peak * 0.5 * (1.0 + np.cos(np.pi * progress))


# -- augmentations ----------------------------------------------------------------


def augment_remix(clean: np.ndarray, noise: np.ndarray,
                  rng: np.random.Generator) -> np.ndarray:
    """Shuffle noise components across the batch; returns the permuted noise."""
    if clean.shape != noise.shape or clean.ndim != 2:
        raise ValueError("remix expects matching [B, T] arrays")
    return noise[rng.permutation(clean.shape[0])]


def augment_bandmask(noisy: np.ndarray, rng: np.random.Generator,
                     max_band_frac: float = 0.2, fft_size: int = 256) -> np.ndarray:
    """Zero a random contiguous frequency band (at most max_band_frac of the
    bandwidth) via STFT -> mask -> overlap-add ISTFT."""
    x = np.asarray(noisy, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    t = x.shape[1]
    if t < fft_size:
        raise ValueError(f"signal length {t} shorter than mask fft size {fft_size}")
    bins = fft_size // 2 + 1
    width = int(rng.integers(0, int(max_band_frac * bins) + 1))
    start = int(rng.integers(0, bins - width + 1)) if width else 0
    out = np.stack([_stft_mask_istft(row, fft_size, start, width) for row in x])
    out = out.astype(np.asarray(noisy).dtype)
    return out[0] if squeeze else out


def _stft_mask_istft(x: np.ndarray, fft_size: int, start: int, width: int) -> np.ndarray:
    # Periodic Hann at hop = fft_size/2 overlap-adds to exactly 1, so the
    # analysis-window-only inverse reconstructs the interior perfectly.
    hop = fft_size // 2
    t = x.size
    extra = (-t) % hop
    xp = np.pad(x, (hop, hop + extra), mode="reflect")
    win = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(fft_size) / fft_size)
    n_frames = (xp.size - fft_size) // hop + 1
    idx = np.arange(n_frames)[:, None] * hop + np.arange(fft_size)[None, :]
    frames = xp[idx] * win
    spec = np.fft.rfft(frames, axis=1)
    if width:
        spec[:, start:start + width] = 0.0
    rec_frames = np.fft.irfft(spec, n=fft_size, axis=1)
    rec = np.zeros(xp.size)
    np.add.at(rec, idx, rec_frames)
    return rec[hop:hop + t]


def augment_revecho(clean: np.ndarray, noise: np.ndarray, rng: np.random.Generator,
                    max_gain: float = 0.3, delay_range: tuple[int, int] = (16, 128),
                    max_echoes: int = 6) -> tuple[np.ndarray, np.ndarray]:
    """Add the same series of exponentially decaying delayed copies to the
    clean and noise components."""
    gain = float(rng.uniform(0.0, max_gain))
    delay = int(rng.integers(delay_range[0], delay_range[1] + 1))
    return (apply_echoes(clean, gain, delay, max_echoes),
            apply_echoes(noise, gain, delay, max_echoes))


def apply_echoes(x: np.ndarray, gain: float, delay: int, max_echoes: int = 6) -> np.ndarray:
    if gain == 0.0:
        return x.copy()
    out = x.astype(np.float64, copy=True)
    g = 1.0
    for k in range(1, max_echoes + 1):
        g *= gain
        if g < 1e-3:
            break
        shift = k * delay
        if shift >= x.shape[-1]:
            break
        out[..., shift:] += g * x[..., :-shift]
    return out.astype(x.dtype)


# -- synthetic data ----------------------------------------------------------------

SNR_GRID_DB = (0.0, 5.0, 10.0, 15.0)


def make_synthetic_dataset(n: int, seed: int, duration: int = 16000,
                           sample_rate: int = 16000,
                           freq_range: tuple[float, float] = (150.0, 1200.0),
                           ) -> list[tuple[np.ndarray, np.ndarray]]:
    """Toy (clean, noisy) pairs: enveloped sinusoid mixtures plus white or
    pink noise at an SNR drawn from the training grid. Tone frequencies sit
    in a speech-fundamental-like band while the noise is full-band."""
    rng = np.random.default_rng(seed)
    t = np.arange(duration) / sample_rate
    pairs = []
    for _ in range(n):
        clean = np.zeros(duration)
        for _ in range(int(rng.integers(2, 5))):
            freq = np.exp(rng.uniform(np.log(freq_range[0]), np.log(freq_range[1])))
            phase = rng.uniform(0, 2 * np.pi)
            attack = rng.uniform(0.05, 0.5)
            env = np.minimum(t / (attack * t[-1] + 1e-9), 1.0) * np.exp(
                -t * rng.uniform(0.0, 3.0))
            clean += rng.uniform(0.2, 1.0) * env * np.sin(2 * np.pi * freq * t + phase)
        clean *= rng.uniform(0.3, 0.8) / (np.abs(clean).max() + 1e-12)

        noise = rng.normal(size=duration)
        if rng.uniform() < 0.5:
            spec = np.fft.rfft(noise)
            freqs = np.fft.rfftfreq(duration, 1.0 / sample_rate)
            spec[1:] /= np.sqrt(freqs[1:])
            noise = np.fft.irfft(spec, n=duration)
        snr_db = float(rng.choice(SNR_GRID_DB))
        noise *= np.sqrt(np.sum(clean ** 2) / np.sum(noise ** 2)) * 10.0 ** (-snr_db / 20.0)
        pairs.append((clean.astype(np.float32), (clean + noise).astype(np.float32)))
    return pairs


# -- evaluation and the loop ---------------------------------------------------------


def evaluate_enhancement(gen: Generator, pairs, mrstft_cfg: MrstftConfig = MrstftConfig(),
                         loss_weights: LossWeights = LossWeights(l1=1.0, spectral=1.0,
                                                                 adversarial=0.0)) -> dict:
    """Reconstruction loss and SI-SNR statistics of a model over (clean, noisy) pairs."""
    losses, snr_in, snr_out = [], [], []
    with no_grad():
        for clean, noisy in pairs:
            out = gen.forward(Tensor(noisy.reshape(1, 1, -1))).data[0, 0]
            losses.append(generator_loss(clean, out, None, loss_weights, mrstft_cfg).item())
            snr_in.append(si_snr(clean, noisy))
            snr_out.append(si_snr(clean, out))
    return {
        "loss": float(np.mean(losses)),
        "si_snr_in": float(np.mean(snr_in)),
        "si_snr_out": float(np.mean(snr_out)),
        "si_snr_gain": float(np.mean(snr_out) - np.mean(snr_in)),
    }


@dataclass
class TrainResult:
    history: dict[str, list] = field(default_factory=dict)
    iterations: int = 0


def train(gen: Generator, disc: Discriminator, dataset, cfg: TrainConfig,
          loss_weights: LossWeights = LossWeights(),
          mixup_policy: MixupPolicy = MixupPolicy(),
          mrstft_cfg: MrstftConfig = MrstftConfig(),
          oracle=None, val_dataset=None, checkpoint_fn=None) -> TrainResult:
    """Alternating min-min optimization: one discriminator step (fresh mixup
    coefficient per batch) then one generator step through the frozen
    discriminator, both under Adam with the shared warmup/cosine schedule."""
    if not dataset:
        raise ValueError("empty training dataset")
    if cfg.crop_len % gen.cfg.block:
        raise ValueError(f"crop_len {cfg.crop_len} not a multiple of the model "
                         f"block {gen.cfg.block}")
    longest_win = max(r.win_length for r in mrstft_cfg.resolutions)
    if loss_weights.spectral and cfg.crop_len < longest_win:
        raise ValueError(f"crop_len {cfg.crop_len} shorter than the longest "
                         f"spectral-loss window {longest_win}")
    if any(len(c) < cfg.crop_len for c, _ in dataset):
        raise ValueError("dataset clips shorter than crop_len")
    oracle = oracle or SiSnrProxyOracle()
    rng = np.random.default_rng(cfg.seed)
    gen_state = AdamState()
    disc_state = AdamState()
    history: dict[str, list] = {"g_loss": [], "d_loss": [], "lr": [], "val": []}

    for step in range(cfg.iterations):
        lr = lr_schedule(step + 1, cfg.iterations, cfg.peak_lr, cfg.warmup_frac)
        clean, noisy = _sample_batch(dataset, cfg, rng)
        noise = noisy - clean
        if cfg.remix and cfg.batch_size > 1:
            noise = augment_remix(clean, noise, rng)
        if cfg.revecho:
            clean, noise = augment_revecho(clean, noise, rng)
        noisy = clean + noise
        if cfg.bandmask:
            noisy = augment_bandmask(noisy, rng)

        clean_t = Tensor(clean)
        enhanced = gen.forward(Tensor(noisy[:, None, :]), train=True)
        enhanced_2d = enhanced.reshape(enhanced.shape[0], enhanced.shape[2])

        lam = mixup_policy.sample(rng)
        mixed = mixup(clean, enhanced_2d.data, lam)
        d_loss = discriminator_loss(clean_t, enhanced_2d.detach(), mixed,
                                    disc.forward, oracle)
        d_val = d_loss.item()
        d_loss.backward()
        adam_step(disc.params, disc_state, lr)
        zero_grads(disc.params)

        scores = disc.forward(Tensor(clean[:, None, :]),
                              enhanced_2d.reshape(enhanced.shape[0], 1, enhanced.shape[2]))
        g_loss = generator_loss(clean_t, enhanced_2d, scores, loss_weights, mrstft_cfg)
        g_val = g_loss.item()
        g_loss.backward()
        adam_step(gen.params, gen_state, lr)
        zero_grads(gen.params)
        zero_grads(disc.params)

        if not (np.isfinite(d_val) and np.isfinite(g_val)):
            raise TrainingDiverged(f"non-finite loss at step {step}: D={d_val} G={g_val}")
        history["g_loss"].append(g_val)
        history["d_loss"].append(d_val)
        history["lr"].append(lr)

        if cfg.val_every and val_dataset and (step + 1) % cfg.val_every == 0:
            history["val"].append((step + 1, evaluate_enhancement(gen, val_dataset, mrstft_cfg)))
        if checkpoint_fn and cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0:
            checkpoint_fn(step + 1, gen, disc)

    return TrainResult(history=history, iterations=cfg.iterations)


def _sample_batch(dataset, cfg: TrainConfig, rng: np.random.Generator):
    idx = rng.integers(0, len(dataset), size=cfg.batch_size)
    clean = np.empty((cfg.batch_size, cfg.crop_len), dtype=np.float32)
    noisy = np.empty((cfg.batch_size, cfg.crop_len), dtype=np.float32)
    for row, i in enumerate(idx):
        c, n = dataset[i]
        start = int(rng.integers(0, c.shape[0] - cfg.crop_len + 1))
        clean[row] = c[start:start + cfg.crop_len]
        noisy[row] = n[start:start + cfg.crop_len]
    return clean, noisy
