"""Flat key=value config files mapping onto the model/training dataclasses.

Example:

    # model
    gen.layers = 8
    gen.hidden = 64
    gen.max_channels = 128
    # training
    train.iterations = 2000
    train.crop_len = 2048
    loss.adversarial = 0.05
    data.pairs = 64

Unknown keys are errors; omitted keys keep their dataclass defaults.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .discriminator import DiscriminatorConfig
from .generator import GeneratorConfig
from .training import LossWeights, MixupPolicy, TrainConfig


class ConfigFileError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    pairs: int = 64
    duration: int = 16000
    val_pairs: int = 16


@dataclass
class ConfigBundle:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossWeights = field(default_factory=LossWeights)
    mixup: MixupPolicy = field(default_factory=MixupPolicy)
    data: DataConfig = field(default_factory=DataConfig)


_SECTIONS = {
    "gen": ("generator", GeneratorConfig),
    "disc": ("discriminator", DiscriminatorConfig),
    "train": ("train", TrainConfig),
    "loss": ("loss", LossWeights),
    "mixup": ("mixup", MixupPolicy),
    "data": ("data", DataConfig),
}


def parse_config_text(text: str) -> ConfigBundle:
    updates: dict[str, dict] = {attr: {} for attr, _ in _SECTIONS.values()}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigFileError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if "." not in key:
            raise ConfigFileError(f"line {lineno}: key {key!r} has no section prefix")
        section, name = key.split(".", 1)
        if section not in _SECTIONS:
            raise ConfigFileError(f"line {lineno}: unknown section {section!r}")
        attr, cls = _SECTIONS[section]
        spec = {f.name: f for f in fields(cls)}
        if name not in spec:
            raise ConfigFileError(f"line {lineno}: unknown key {key!r}")
        updates[attr][name] = _convert(value, spec[name].type, key, lineno)

    bundle = ConfigBundle()
    for attr, _ in _SECTIONS.values():
        if updates[attr]:
            try:
                setattr(bundle, attr, replace(getattr(bundle, attr), **updates[attr]))
            except ValueError as exc:
                raise ConfigFileError(str(exc)) from exc
    return bundle


def load_config(path) -> ConfigBundle:
    return parse_config_text(Path(path).read_text())


def _convert(value: str, type_hint, key: str, lineno: int):
    hint = str(type_hint)
    try:
        if "bool" in hint:
            lowered = value.lower()
            if lowered in ("true", "1", "yes", "on"):
                return True
            if lowered in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if "tuple" in hint:
            return tuple(int(v.strip()) for v in value.split(","))
        if "int" in hint:
            return int(value)
        if "float" in hint:
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigFileError(f"line {lineno}: bad value for {key}: {exc}") from exc


def format_config(bundle: ConfigBundle) -> str:
    """Render a bundle back to config text (all keys explicit)."""
    lines = []
    for section, (attr, _) in _SECTIONS.items():
        obj = getattr(bundle, attr)
        for f in fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{section}.{f.name} = {value}")
    return "\n".join(lines) + "\n"
