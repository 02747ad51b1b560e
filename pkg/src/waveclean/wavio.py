"""Minimal RIFF/WAVE codec: PCM16 and float32 read, PCM16 write.

Stereo input is downmixed by averaging; sample rates other than the expected
one are rejected explicitly (no silent resampling).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

FORMAT_PCM = 1
FORMAT_FLOAT = 3
FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    pass


@dataclass
class AudioClip:
    samples: np.ndarray      # float waveform in [-1, 1]
    sample_rate: int
    channels: int = 1

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(self.samples)):
            raise WavFormatError("non-finite samples")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def wav_read(path, require_rate: int | None = 16000) -> AudioClip:
    raw = Path(path).read_bytes()
    if len(raw) < 12:
        raise WavFormatError("truncated file: missing RIFF header")
    if raw[0:4] != b"RIFF":
        raise WavFormatError("not a RIFF file (missing 'RIFF' chunk)")
    if raw[8:12] != b"WAVE":
        raise WavFormatError("RIFF file is not WAVE (missing 'WAVE' form)")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        cid = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8: pos + 8 + size]
        if len(body) < size:
            raise WavFormatError(f"truncated {cid.decode('ascii', 'replace')!r} chunk")
        if cid == b"fmt ":
            fmt = body
        elif cid == b"data":
            data = body
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    if fmt is None:
        raise WavFormatError("missing 'fmt ' chunk")
    if data is None:
        raise WavFormatError("missing 'data' chunk")
    if len(fmt) < 16:
        raise WavFormatError("short 'fmt ' chunk")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format == FORMAT_EXTENSIBLE and len(fmt) >= 26:
        (audio_format,) = struct.unpack_from("<H", fmt, 24)
    if channels not in (1, 2):
        raise WavFormatError(f"unsupported channel count {channels}")
    if require_rate is not None and rate != require_rate:
        raise WavFormatError(
            f"sample rate {rate} Hz != required {require_rate} Hz (no resampling)")

    if audio_format == FORMAT_PCM and bits == 16:
        ints = np.frombuffer(data[: len(data) - len(data) % (2 * channels)], dtype="<i2")
        samples = ints.astype(np.float32) / 32768.0
    elif audio_format == FORMAT_FLOAT and bits == 32:
        samples = np.frombuffer(
            data[: len(data) - len(data) % (4 * channels)], dtype="<f4").astype(np.float32)
    else:
        raise WavFormatError(f"unsupported codec: format {audio_format}, {bits} bits")

    if channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)
    return AudioClip(samples=samples, sample_rate=rate, channels=1)


def wav_write(path, clip: AudioClip) -> None:
    """Write mono PCM16 with clamping to [-1, 1]."""
    pcm = np.clip(np.round(clip.samples.astype(np.float64) * 32768.0), -32768, 32767)
    payload = pcm.astype("<i2").tobytes()
    rate = clip.sample_rate
    header = b"".join([
        b"RIFF", struct.pack("<I", 36 + len(payload)), b"WAVE",
        b"fmt ", struct.pack("<IHHIIHH", 16, FORMAT_PCM, 1, rate, rate * 2, 2, 16),
        b"data", struct.pack("<I", len(payload)),
    ])
    Path(path).write_bytes(header + payload)
