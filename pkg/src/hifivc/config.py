"""Declarative run configuration (YAML) with defaults for the full-size model."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from hifivc.audio import MelConfig
from hifivc.gan import DiscriminatorConfig, GeneratorConfig


@dataclass(frozen=True)
class LossWeights:
    lambda_rec: float = 45.0
    lambda_advp: float = 1.0
    lambda_fm: float = 1.0
    lambda_spk: float = 0.01

    def __post_init__(self):
        if min(dataclasses.astuple(self)) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    lr0: float = 2e-4
    gamma: float = 0.995
    epochs: int = 120
    betas: tuple = (0.8, 0.99)
    batch_size: int = 16
    segment_frames: int = 8
    steps_per_epoch: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")


@dataclass(frozen=True)
class ContentConfig:
    encoder: str = "toy"
    seed: int = 0
    dim: int = 256
    model_path: str | None = None


@dataclass(frozen=True)
class F0Config:
    method: str = "builtin"
    threshold: float = 0.45
    channels: tuple = (64, 128, 64)
    kernel_size: int = 5
    strides: tuple = (2, 2, 1)


@dataclass(frozen=True)
class SpeakerConfig:
    dim: int = 128
    hidden: int = 256
    num_blocks: int = 5


@dataclass(frozen=True)
class EvalConfig:
    pairs_per_category: int = 25
    pcc_scale: str = "linear"
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    mel: MelConfig = field(default_factory=MelConfig)
    content: ContentConfig = field(default_factory=ContentConfig)
    f0: F0Config = field(default_factory=F0Config)
    speaker: SpeakerConfig = field(default_factory=SpeakerConfig)
    generator: GeneratorConfig | None = None
    discriminator: DiscriminatorConfig = field(default_factory=DiscriminatorConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        expected_in = self.content.dim + self.f0.channels[-1]
        gen = self.generator or GeneratorConfig(in_channels=expected_in, cond_dim=self.speaker.dim)
        if gen.in_channels != expected_in or gen.cond_dim != self.speaker.dim:
            raise ValueError(
                "generator in_channels/cond_dim must equal content dim + F0 channels / speaker dim"
            )
        object.__setattr__(self, "generator", gen)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def architecture_hash(self) -> str:
        """Hash of everything that shapes learned parameters; training knobs are excluded."""
        d = self.to_dict()
        arch = {k: d[k] for k in ("mel", "content", "f0", "speaker", "generator", "discriminator")}
        return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        sections = {
            "mel": MelConfig, "content": ContentConfig, "f0": F0Config,
            "speaker": SpeakerConfig, "generator": GeneratorConfig,
            "discriminator": DiscriminatorConfig, "weights": LossWeights,
            "train": TrainConfig, "eval": EvalConfig,
        }
        unknown = set(data) - set(sections)
        if unknown:
            raise ValueError(f"unknown config sections: {sorted(unknown)}")
        kwargs = {}
        for name, typ in sections.items():
            if data.get(name) is not None:
                kwargs[name] = _build(typ, data[name])
        return cls(**kwargs)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(yaml.safe_load(fh) or {})

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.to_dict(), fh, sort_keys=False)

    @classmethod
    def small(cls, **overrides) -> "RunConfig":
        """CPU-sized model used by the test suite and smoke runs."""
        base = dict(
            content=ContentConfig(dim=64),
            f0=F0Config(channels=(16, 32, 16)),
            speaker=SpeakerConfig(dim=32, hidden=64),
            generator=GeneratorConfig(
                in_channels=80, cond_dim=32, initial_channels=64, resblock_kernel_sizes=(3,),
                min_channels=16,
            ),
            discriminator=DiscriminatorConfig(
                periods=(2, 3, 5, 7, 11),
                period_channels=(4, 8, 16, 16),
                num_scales=3,
                scale_channels=(8, 8, 16, 16, 16, 16),
                scale_groups=1,
                scale_kernel=7,
            ),
            train=TrainConfig(batch_size=8, segment_frames=12, epochs=1),
        )
        base.update(overrides)
        return cls(**base)


def _build(typ, values: dict):
    names = {f.name for f in dataclasses.fields(typ)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown {typ.__name__} keys: {sorted(unknown)}")
    fixed = {k: tuple(v) if isinstance(v, list) else v for k, v in values.items()}
    return typ(**fixed)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj
