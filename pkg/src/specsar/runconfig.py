"""Run configuration: ``[section]`` headers with ``key = value`` lines.

Every key has a default; unknown sections or keys are rejected. Command-line
overrides use the same ``section.key=value`` spelling.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from specsar.errors import ConfigError
from specsar.losses import FocalConfig, inverse_frequency_alpha
from specsar.model.config import NetConfig, parse_fraction


@dataclass
class RunSection:
    seed: int = 0
    reference_mode: bool = True
    out_dir: str = "run"


@dataclass
class DataSection:
    manifest: str = "data/manifest.txt"
    n_patches: int = 64
    patch_size: int = 64
    n_classes: int = 9
    window_days: float = 360.0
    coverage: float = 1.0
    world_seed: int = 0


@dataclass
class ModelSection:
    preset: str = "desk"
    split: str = "3/4"
    decoder_dim: int = 0  # 0 keeps the preset's width


@dataclass
class OptimSection:
    lr: float = 0.0005
    batch_size: int = 4
    epochs: int = 20
    steps: int = 0  # > 0 overrides epochs
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    augment: bool = True


@dataclass
class LossSection:
    kind: str = "focal"
    gamma: float = 2.0
    alpha: str = "inverse_frequency"  # or "none", or comma-separated weights


@dataclass
class AblationSection:
    cross_attention: bool = True
    efficient_sa: bool = True
    mmam: bool = True


@dataclass
class ExperimentSection:
    seeds: str = "0,1,2"
    bench_patches: int = 64
    bench_size: int = 32
    test_patches: int = 16
    steps: int = 480
    lr: float = 0.001


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    optim: OptimSection = field(default_factory=OptimSection)
    loss: LossSection = field(default_factory=LossSection)
    ablation: AblationSection = field(default_factory=AblationSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)

    def set(self, dotted: str, raw: str) -> None:
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        section, key = dotted.split(".", 1)
        _assign(self, section.strip(), key.strip(), raw)

    def net_config(self) -> NetConfig:
        preset = self.model.preset
        kwargs = {"split": parse_fraction(self.model.split)}
        if self.model.decoder_dim:
            kwargs["decoder_dim"] = self.model.decoder_dim
        kwargs.update(
            cross_attention=self.ablation.cross_attention,
            efficient_sa=self.ablation.efficient_sa,
            mmam=self.ablation.mmam,
        )
        if preset == "desk":
            return NetConfig.desk(**kwargs)
        if preset == "full":
            return NetConfig.full_size(**kwargs)
        raise ConfigError(f"unknown model preset {preset!r}; use 'desk' or 'full'")

    def focal_config(self, histogram=None) -> FocalConfig:
        spec = self.loss.alpha.strip().lower()
        if spec == "none":
            alpha = None
        elif spec == "inverse_frequency":
            alpha = inverse_frequency_alpha(histogram) if histogram is not None else None
        else:
            try:
                alpha = tuple(float(a) for a in spec.split(","))
            except ValueError:
                raise ConfigError(f"cannot parse alpha weights {self.loss.alpha!r}") from None
        return FocalConfig(self.loss.gamma, alpha)

    def seeds(self) -> list[int]:
        try:
            return [int(s) for s in self.experiment.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"cannot parse seeds {self.experiment.seeds!r}") from None

    def validate(self) -> None:
        if self.optim.batch_size < 1:
            raise ConfigError("optim.batch_size must be >= 1")
        if self.optim.epochs < 0 or self.optim.steps < 0:
            raise ConfigError("optim.epochs and optim.steps must be >= 0")
        if self.loss.kind not in ("focal", "ce", "bce"):
            raise ConfigError(f"loss.kind must be focal, ce or bce; got {self.loss.kind!r}")
        if self.data.patch_size < 16:
            raise ConfigError("data.patch_size must be >= 16")
        self.net_config()
        self.focal_config()

    def to_text(self) -> str:
        out = []
        for sec in dataclasses.fields(self):
            out.append(f"[{sec.name}]")
            for f in dataclasses.fields(getattr(self, sec.name)):
                value = getattr(getattr(self, sec.name), f.name)
                out.append(f"{f.name} = {str(value).lower() if isinstance(value, bool) else value}")
            out.append("")
        return "\n".join(out)


def _convert(raw: str, kind, where: str):
    raw = raw.strip()
    try:
        if kind is bool or kind == "bool":
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError
        if kind is int or kind == "int":
            return int(raw)
        if kind is float or kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {kind}") from None
    return raw


def _assign(cfg: RunConfig, section: str, key: str, raw: str) -> None:
    sections = {f.name for f in dataclasses.fields(cfg)}
    if section not in sections:
        raise ConfigError(f"unknown config section [{section}]")
    target = getattr(cfg, section)
    kinds = {f.name: f.type for f in dataclasses.fields(target)}
    if key not in kinds:
        raise ConfigError(f"unknown key {key!r} in [{section}]; valid keys: {sorted(kinds)}")
    setattr(target, key, _convert(raw, kinds[key], f"{section}.{key}"))


def load_config(path: Optional[str] = None, overrides=()) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                           comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            text = Path(path).read_text(encoding="utf-8")
            parser.read_string(text, source=str(path))
        except (OSError, UnicodeDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        for section in parser.sections():
            for key, value in parser.items(section):
                _assign(cfg, section, key, value)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value)
    cfg.validate()
    return cfg
