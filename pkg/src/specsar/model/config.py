"""Stage and network hyper-parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

from specsar.errors import ConfigError

N_SPEC_BANDS = 10
N_SAR_BANDS = 2
N_CLASSES = 9


def parse_fraction(value) -> Fraction:
    try:
        frac = Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a fraction: {value!r}") from None
    if not 0 < frac < 1:
        raise ConfigError(f"split fraction must lie strictly between 0 and 1, got {frac}")
    return frac


@dataclass(frozen=True)
class StageConfig:
    """One encoder stage. ``reduction`` is the key/value sequence-shortening factor."""

    channels: int
    depth: int
    heads: int
    reduction: int
    mlp_ratio: int = 4
    split: Fraction = Fraction(3, 4)

    @property
    def spec_channels(self) -> int:
        return math.ceil(self.split * self.channels)

    @property
    def sar_channels(self) -> int:
        return self.channels - self.spec_channels

    def validate(self) -> None:
        if self.channels <= 0 or self.depth < 0 or self.heads <= 0 or self.mlp_ratio <= 0:
            raise ConfigError(f"non-positive stage setting in {self}")
        if self.reduction < 1:
            raise ConfigError(f"reduction ratio must be >= 1, got {self.reduction}")
        if self.spec_channels <= 0 or self.sar_channels <= 0:
            raise ConfigError(
                f"split {self.split} of {self.channels} channels leaves an empty branch"
            )
        for label, c in (("spectral", self.spec_channels), ("SAR", self.sar_channels)):
            if c % self.heads:
                raise ConfigError(
                    f"{label} branch width {c} is not divisible by {self.heads} heads"
                )


@dataclass(frozen=True)
class NetConfig:
    stages: tuple[StageConfig, ...]
    in_spec: int = N_SPEC_BANDS
    in_sar: int = N_SAR_BANDS
    n_classes: int = N_CLASSES
    decoder_dim: int = 64
    mmam_reduction: int = 4
    cross_attention: bool = True
    efficient_sa: bool = True
    mmam: bool = True
    name: str = field(default="desk", compare=False)

    def __post_init__(self):
        if len(self.stages) != 4:
            raise ConfigError(f"expected 4 encoder stages, got {len(self.stages)}")
        if not self.efficient_sa:
            object.__setattr__(
                self, "stages", tuple(replace(s, reduction=1) for s in self.stages)
            )
        for s in self.stages:
            s.validate()
        if self.n_classes < 1 or self.decoder_dim < 1 or self.mmam_reduction < 1:
            raise ConfigError("n_classes, decoder_dim and mmam_reduction must be positive")

    @property
    def split(self) -> Fraction:
        return self.stages[0].split

    def with_split(self, split) -> "NetConfig":
        frac = parse_fraction(split)
        return replace(self, stages=tuple(replace(s, split=frac) for s in self.stages))

    def with_switches(self, cross_attention: bool, efficient_sa: bool, mmam: bool) -> "NetConfig":
        return replace(self, cross_attention=cross_attention, efficient_sa=efficient_sa, mmam=mmam)

    @classmethod
    def desk(cls, **overrides) -> "NetConfig":
        split = parse_fraction(overrides.pop("split", Fraction(3, 4)))
        stages = tuple(
            StageConfig(c, d, h, r, 4, split)
            for c, d, h, r in zip((16, 32, 48, 64), (2, 2, 2, 2), (1, 2, 3, 4), (8, 4, 2, 1))
        )
        return cls(stages=stages, **overrides)

    @classmethod
    def full_size(cls, **overrides) -> "NetConfig":
        """MiT-B2-like widths; reductions are key/value sequence ratios (8x8, 4x4, 2x2, 1)."""
        split = parse_fraction(overrides.pop("split", Fraction(3, 4)))
        stages = tuple(
            StageConfig(c, d, h, r, 4, split)
            for c, d, h, r in zip((64, 128, 320, 512), (3, 4, 6, 3), (1, 2, 5, 8), (64, 16, 4, 1))
        )
        overrides.setdefault("decoder_dim", 768)
        overrides.setdefault("name", "full")
        return cls(stages=stages, **overrides)
