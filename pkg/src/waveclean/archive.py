"""Binary weight archive: magic, format version, a JSON config snapshot, and
named little-endian float32 tensors. Loading validates every tensor shape
against the schema derived from the embedded config before any model is
built; byte-exact round trips are guaranteed by deterministic ordering.
"""
from __future__ import annotations

import json
import struct
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .discriminator import Discriminator, DiscriminatorConfig
from .generator import Generator, GeneratorConfig

MAGIC = b"WAVECLN\x00"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


class ArchiveError(ValueError):
    pass


@dataclass
class WeightArchive:
    config: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = VERSION


def save_weights(archive: WeightArchive, path) -> None:
    out = [MAGIC, struct.pack("<I", archive.version)]
    blob = json.dumps(archive.config, sort_keys=True, separators=(",", ":")).encode()
    out.append(struct.pack("<I", len(blob)))
    out.append(blob)
    out.append(struct.pack("<I", len(archive.tensors)))
    for name, arr in archive.tensors.items():
        arr = np.asarray(arr)
        code = _DTYPE_CODES.get(np.dtype(arr.dtype.str.replace(">", "<")))
        if code is None:
            raise ArchiveError(f"tensor {name!r} has unsupported dtype {arr.dtype}")
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)))
        out.append(nb)
        out.append(struct.pack("<BB", code, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    Path(path).write_bytes(b"".join(out))


def load_weights(path) -> WeightArchive:
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ArchiveError("bad magic: not a waveclean weight archive")
    pos = len(MAGIC)

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise ArchiveError("truncated archive")
        vals = struct.unpack_from(fmt, raw, pos)
        pos += size
        return vals

    (version,) = take("<I")
    if version != VERSION:
        raise ArchiveError(f"format version {version} != supported {VERSION}")
    (cfg_len,) = take("<I")
    if pos + cfg_len > len(raw):
        raise ArchiveError("truncated archive in config block")
    try:
        config = json.loads(raw[pos: pos + cfg_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ArchiveError(f"corrupt config block: {exc}") from exc
    pos += cfg_len
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = take("<H")
        name = raw[pos: pos + name_len].decode()
        pos += name_len
        code, ndim = take("<BB")
        if code not in _DTYPES:
            raise ArchiveError(f"tensor {name!r}: unknown dtype code {code}")
        shape = take(f"<{ndim}I")
        dtype = _DTYPES[code]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if pos + nbytes > len(raw):
            raise ArchiveError(f"truncated archive in tensor {name!r}")
        tensors[name] = np.frombuffer(raw, dtype=dtype, count=int(np.prod(shape, dtype=np.int64)),
                                      offset=pos).reshape(shape).copy()
        pos += nbytes
    return WeightArchive(config=config, tensors=tensors, version=version)


# -- model <-> archive glue ---------------------------------------------------------


def archive_from_models(gen: Generator, disc: Discriminator | None = None,
                        extra: dict | None = None) -> WeightArchive:
    config = {"generator": asdict(gen.cfg), "discriminator": None}
    tensors: dict[str, np.ndarray] = {}
    for name, p in gen.params.items():
        tensors[f"gen.{name}"] = p.data
    for name, buf in gen.buffers.items():
        tensors[f"gen.buf.{name}"] = buf
    if disc is not None:
        cfg = asdict(disc.cfg)
        cfg["block_channels"] = list(cfg["block_channels"])
        config["discriminator"] = cfg
        for name, p in disc.params.items():
            tensors[f"disc.{name}"] = p.data
    if extra:
        config["extra"] = extra
    return WeightArchive(config=config, tensors=tensors)


def build_models(archive: WeightArchive) -> tuple[Generator, Discriminator | None]:
    """Reconstruct models, validating every tensor shape against the schema
    the embedded config implies. Unknown extra tensors warn and are ignored;
    missing or mis-shaped tensors are errors naming the tensor."""
    gen_cfg = GeneratorConfig(**archive.config["generator"])
    gen = Generator(gen_cfg, seed=0)
    disc = None
    if archive.config.get("discriminator"):
        dc = dict(archive.config["discriminator"])
        dc["block_channels"] = tuple(dc["block_channels"])
        disc = Discriminator(DiscriminatorConfig(**dc), seed=0)

    expected: dict[str, np.ndarray] = {}
    for name, p in gen.params.items():
        expected[f"gen.{name}"] = p.data
    for name, buf in gen.buffers.items():
        expected[f"gen.buf.{name}"] = buf
    if disc is not None:
        for name, p in disc.params.items():
            expected[f"disc.{name}"] = p.data

    for name, target in expected.items():
        if name not in archive.tensors:
            raise ArchiveError(f"archive is missing tensor {name!r}")
        got = archive.tensors[name]
        if tuple(got.shape) != tuple(target.shape):
            raise ArchiveError(
                f"tensor {name!r}: archive shape {tuple(got.shape)} != "
                f"expected {tuple(target.shape)}")
        target[...] = got.astype(target.dtype)
    unknown = sorted(set(archive.tensors) - set(expected))
    if unknown:
        warnings.warn(f"ignoring {len(unknown)} unknown archive tensors: "
                      f"{', '.join(unknown[:4])}{'...' if len(unknown) > 4 else ''}")
    return gen, disc
