"""Synthetic bimodal land-cover scenes and temporal SAR compositing.

Scenes are seeded Voronoi partitions. Every class has a fixed 10-band mean
reflectance and a fixed (VV, VH) backscatter level shared across the whole
dataset ("world"), so a model trained on some scenes transfers to others.
Classes come in pairs whose spectra nearly coincide but whose backscatter
differs, which gives the SAR branch something to contribute.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from specsar.autodiff.nn import make_rng
from specsar.errors import ConfigError
from specsar.model.config import N_CLASSES, N_SAR_BANDS, N_SPEC_BANDS

SPECTRAL_NOISE = 0.05
SPECKLE_LOOKS = 4
PAIR_OFFSET = 0.015
PIXELS_PER_SITE = 1024
HALF_WINDOW_LIMIT = 180


@dataclass
class PatchSample:
    spec: np.ndarray  # (10, S, S) float32
    sar: Optional[np.ndarray]  # (2, S, S) float32, None before compositing
    labels: np.ndarray  # (S, S) uint8
    patch_id: str = ""

    def __post_init__(self):
        if self.spec.ndim != 3 or self.spec.shape[0] != N_SPEC_BANDS:
            raise ConfigError(f"spectral stack must be ({N_SPEC_BANDS}, S, S), got {self.spec.shape}")
        size = self.spec.shape[1:]
        if self.labels.shape != size:
            raise ConfigError(f"label map {self.labels.shape} does not match imagery {size}")
        if self.sar is not None and self.sar.shape != (N_SAR_BANDS, *size):
            raise ConfigError(f"SAR stack must be ({N_SAR_BANDS}, *{size}), got {self.sar.shape}")
        if self.labels.size and int(self.labels.max()) >= N_CLASSES:
            raise ConfigError(f"label {int(self.labels.max())} outside 0..{N_CLASSES - 1}")

    @property
    def size(self) -> int:
        return self.spec.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, PatchSample):
            return NotImplemented
        sar_eq = (self.sar is None and other.sar is None) or (
            self.sar is not None and other.sar is not None and np.array_equal(self.sar, other.sar)
        )
        return (
            self.patch_id == other.patch_id
            and np.array_equal(self.spec, other.spec)
            and np.array_equal(self.labels, other.labels)
            and sar_eq
        )


@dataclass
class SarTimeSeries:
    observations: list = field(default_factory=list)
    day_offsets: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.observations) != len(self.day_offsets):
            raise ConfigError("observation and day-offset lists differ in length")
        if any(not -HALF_WINDOW_LIMIT <= d <= HALF_WINDOW_LIMIT for d in self.day_offsets):
            raise ConfigError(f"day offsets must lie in [-{HALF_WINDOW_LIMIT}, {HALF_WINDOW_LIMIT}]")
        if list(self.day_offsets) != sorted(self.day_offsets):
            raise ConfigError("day offsets must be sorted ascending")


@dataclass(frozen=True)
class World:
    """Class signatures shared by every scene generated from the same world seed."""

    spectra: np.ndarray  # (N_CLASSES, 10)
    backscatter: np.ndarray  # (N_CLASSES, 2)

    @classmethod
    def from_seed(cls, seed: int = 0) -> "World":
        rng = make_rng(10_000 + seed)
        n_pairs = (N_CLASSES + 1) // 2
        base = rng.uniform(0.2, 0.7, size=(n_pairs, N_SPEC_BANDS))
        spectra = np.empty((N_CLASSES, N_SPEC_BANDS))
        for c in range(N_CLASSES):
            sign = 1.0 if c % 2 == 0 else -1.0
            spectra[c] = base[c // 2] + sign * PAIR_OFFSET
        vv = rng.uniform(0.25, 0.5, size=N_CLASSES)
        vv[1::2] *= 2.0
        vh = vv * rng.uniform(0.2, 0.6, size=N_CLASSES)
        return cls(spectra, np.stack([vv, vh], axis=1))


def voronoi_labels(rng: np.random.Generator, size: int, n_classes: int, n_sites: int) -> np.ndarray:
    sites = rng.uniform(0, size, size=(n_sites, 2))
    site_class = rng.integers(0, n_classes, size=n_sites)
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    d2 = (yy[None] - sites[:, 0, None, None]) ** 2 + (xx[None] - sites[:, 1, None, None]) ** 2
    return site_class[np.argmin(d2, axis=0)].astype(np.uint8)


def speckle(rng: np.random.Generator, shape, looks: int = SPECKLE_LOOKS) -> np.ndarray:
    """Unit-mean multiplicative gamma noise with variance 1/looks."""
    return rng.gamma(shape=looks, scale=1.0 / looks, size=shape)


def generate_scene(seed: int, size: int = 64, n_classes: int = N_CLASSES, *,
                   world: Optional[World] = None, n_sites: Optional[int] = None,
                   coverage: float = 1.0, obs_range: tuple[int, int] = (4, 12),
                   ) -> tuple[PatchSample, SarTimeSeries]:
    """Generate one scene: spectral stack, labels and an uncomposited SAR series.

    With probability ``1 - coverage`` the series is empty (no SAR acquisitions).
    """
    if size < 16:
        raise ConfigError(f"scene size must be >= 16, got {size}")
    if not 1 <= n_classes <= N_CLASSES:
        raise ConfigError(f"n_classes must lie in 1..{N_CLASSES}, got {n_classes}")
    world = world or World.from_seed(0)
    rng = make_rng(seed)
    if n_sites is None:
        n_sites = max(2, round(size * size / PIXELS_PER_SITE))
    labels = voronoi_labels(rng, size, n_classes, n_sites)

    spec = world.spectra[labels].transpose(2, 0, 1)
    spec = spec + rng.normal(0.0, SPECTRAL_NOISE, size=spec.shape)
    spec = np.clip(spec, 0.0, 1.0).astype(np.float32)

    base = world.backscatter[labels].transpose(2, 0, 1)
    observations, offsets = [], []
    if rng.random() < coverage:
        n_obs = int(rng.integers(obs_range[0], obs_range[1] + 1))
        offsets = sorted(int(d) for d in rng.integers(-HALF_WINDOW_LIMIT, HALF_WINDOW_LIMIT + 1, size=n_obs))
        observations = [(base * speckle(rng, base.shape)).astype(np.float32) for _ in offsets]
    sample = PatchSample(spec, None, labels, patch_id=f"scene-{seed}")
    return sample, SarTimeSeries(observations, offsets)


def composite_sar(series: SarTimeSeries, window_days: float = 360) -> Optional[np.ndarray]:
    """Mean of the observations within +-window/2 days, or None if there are none."""
    if window_days <= 0:
        raise ConfigError(f"window must be positive, got {window_days}")
    half = window_days / 2.0
    picked = [(d, obs) for d, obs in zip(series.day_offsets, series.observations) if abs(d) <= half]
    if not picked:
        return None
    # canonical summation order makes the result independent of list order
    picked.sort(key=lambda item: (item[0], item[1].tobytes()))
    acc = np.zeros(picked[0][1].shape, dtype=np.float64)
    for _, obs in picked:
        acc += obs
    return (acc / len(picked)).astype(np.float32)


def make_patch(seed: int, size: int = 64, n_classes: int = N_CLASSES, *,
               window_days: float = 360, coverage: float = 1.0,
               world: Optional[World] = None) -> Optional[PatchSample]:
    """Scene plus composited SAR; None when the scene has to be discarded."""
    sample, series = generate_scene(seed, size, n_classes, world=world, coverage=coverage)
    sar = composite_sar(series, window_days)
    if sar is None:
        return None
    sample.sar = sar
    return sample


def class_histogram(samples, n_classes: int = N_CLASSES) -> np.ndarray:
    hist = np.zeros(n_classes, dtype=np.int64)
    for s in samples:
        hist += np.bincount(s.labels.reshape(-1), minlength=n_classes)[:n_classes]
    return hist
