"""Desk-scale ablation sweep over module switches and channel-split ratios."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from specsar.autodiff.nn import derive_seed
from specsar.data.synth import PatchSample, World, class_histogram, make_patch
from specsar.losses import FocalConfig, inverse_frequency_alpha
from specsar.metrics import metrics
from specsar.model.config import NetConfig
from specsar.model.network import build_network
from specsar.training import TrainSettings, evaluate, reference_mode, train_model

SWITCHES = ("cross_attention", "efficient_sa", "mmam")
SPLIT_RATIOS = (Fraction(1, 4), Fraction(1, 2), Fraction(3, 4))
BENCH_SEED = 2024


@dataclass(frozen=True)
class Variant:
    cross_attention: bool
    efficient_sa: bool
    mmam: bool
    split: Fraction = Fraction(3, 4)

    @property
    def label(self) -> str:
        on = [s for s in SWITCHES if getattr(self, s)]
        return f"{'+'.join(on) or 'baseline'} split={self.split}"

    def net_config(self) -> NetConfig:
        return NetConfig.desk(split=self.split, cross_attention=self.cross_attention,
                              efficient_sa=self.efficient_sa, mmam=self.mmam)


@dataclass
class VariantResult:
    variant: Variant
    mious: list
    oas: list
    f1s: list

    @property
    def mean_miou(self) -> float:
        return float(np.mean(self.mious))

    @property
    def std_miou(self) -> float:
        return float(np.std(self.mious))


def switch_variants() -> list[Variant]:
    return [Variant(*combo) for combo in itertools.product((False, True), repeat=3)]


def split_variants() -> list[Variant]:
    return [Variant(True, True, True, r) for r in SPLIT_RATIOS]


def benchmark(n_patches: int = 64, size: int = 32, n_test: int = 16,
              seed: int = BENCH_SEED) -> tuple[list[PatchSample], list[PatchSample]]:
    """Fixed train/test split of synthetic patches shared by every variant."""
    world = World.from_seed(0)
    samples = []
    i = 0
    while len(samples) < n_patches:
        s = make_patch(derive_seed(seed, i), size, world=world)
        if s is not None:
            samples.append(s)
        i += 1
    return samples[: n_patches - n_test], samples[n_patches - n_test :]


def run_variant(variant: Variant, train: Sequence[PatchSample], test: Sequence[PatchSample],
                seeds: Sequence[int], steps: int, lr: float = 1e-3, batch_size: int = 4,
                focal: Optional[FocalConfig] = None) -> VariantResult:
    if focal is None:
        focal = FocalConfig(2.0, inverse_frequency_alpha(class_histogram(train)))
    res = VariantResult(variant, [], [], [])
    for seed in seeds:
        net = build_network(variant.net_config(), seed=seed)
        settings = TrainSettings(lr=lr, batch_size=batch_size, steps=steps, focal=focal, seed=seed)
        train_model(net, train, settings)
        m = metrics(evaluate(net, test))
        res.mious.append(m["miou"])
        res.oas.append(m["oa"])
        res.f1s.append(m["f1"])
    return res


def run_ablation(seeds: Sequence[int] = (0, 1, 2), steps: int = 240, n_patches: int = 64,
                 size: int = 32, n_test: int = 16, lr: float = 1e-3,
                 progress: Optional[Callable[[VariantResult], None]] = None):
    """Returns ``(switch_results, split_results)``; identical variants are trained once."""
    train, test = benchmark(n_patches, size, n_test)
    cache: dict[Variant, VariantResult] = {}

    def get(v: Variant) -> VariantResult:
        if v not in cache:
            cache[v] = run_variant(v, train, test, seeds, steps, lr)
            if progress:
                progress(cache[v])
        return cache[v]

    with reference_mode():
        switches = [get(v) for v in switch_variants()]
        splits = [get(v) for v in split_variants()]
    return switches, splits


def format_table(switches: Sequence[VariantResult], splits: Sequence[VariantResult]) -> str:
    def row(r: VariantResult) -> str:
        v = r.variant
        flags = "".join(f"{'Y' if getattr(v, s) else '-':>6}" for s in SWITCHES)
        return (f"{flags}{str(v.split):>7}{r.mean_miou:>10.4f}{r.std_miou:>8.4f}"
                f"{np.mean(r.oas):>9.4f}{np.mean(r.f1s):>9.4f}")

    head = f"{'CA':>6}{'ESA':>6}{'MMAM':>6}{'split':>7}{'mIoU':>10}{'std':>8}{'OA':>9}{'F1':>9}"
    lines = ["# module switches", head, *map(row, switches), "", "# channel split ratio",
             head, *map(row, splits)]
    full, base = full_vs_baseline(switches)
    lines += ["", f"full_miou={full!r}", f"baseline_miou={base!r}",
              f"full_minus_baseline={full - base!r}"]
    return "\n".join(lines) + "\n"


def full_vs_baseline(switches: Sequence[VariantResult]) -> tuple[float, float]:
    full = next(r for r in switches if all(getattr(r.variant, s) for s in SWITCHES))
    base = next(r for r in switches if not any(getattr(r.variant, s) for s in SWITCHES))
    return full.mean_miou, base.mean_miou

