"""Dataset synthesis, the training loop, and evaluation."""

from __future__ import annotations

import contextlib
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from specsar.autodiff.nn import derive_seed, make_rng
from specsar.autodiff.optim import AdamW, cosine_lr
from specsar.autodiff.tensor import Tensor, no_grad
from specsar.data.patchio import read_manifest, read_patch, write_manifest, write_patch
from specsar.data.synth import PatchSample, World, class_histogram, make_patch
from specsar.errors import NumericalError
from specsar.losses import FocalConfig, compute_loss
from specsar.metrics import ConfusionMatrix, accumulate
from specsar.model.decoder import logits_to_labels, resize_nearest
from specsar.model.network import SpecSarFormer

log = logging.getLogger(__name__)

INIT_STREAM = 0
ORDER_STREAM = 1


@contextlib.contextmanager
def reference_mode(enabled: bool = True):
    """Pin BLAS to one thread so repeated runs are bit-identical."""
    if enabled:
        with threadpool_limits(limits=1):
            yield
    else:
        yield


# ---- data ------------------------------------------------------------------------


@dataclass
class SynthReport:
    paths: list
    discarded: list
    histogram: np.ndarray


def synthesize(out_dir, n: int, seed: int, size: int = 64, n_classes: int = 9,
               window_days: float = 360.0, coverage: float = 1.0, world_seed: int = 0,
               manifest_name: str = "manifest.txt") -> SynthReport:
    """Write up to ``n`` patches plus a manifest; scenes without SAR are dropped."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    world = World.from_seed(world_seed)
    paths, discarded, samples = [], [], []
    for i in range(n):
        sample = make_patch(derive_seed(seed, i), size, n_classes, window_days=window_days,
                            coverage=coverage, world=world)
        if sample is None:
            discarded.append(i)
            continue
        sample.patch_id = f"patch-{i:05d}"
        path = out_dir / f"{sample.patch_id}.dwpx"
        write_patch(sample, path)
        paths.append(path)
        samples.append(sample)
    write_manifest(paths, out_dir / manifest_name)
    return SynthReport(paths, discarded, class_histogram(samples))


def load_dataset(manifest) -> list[PatchSample]:
    return [read_patch(p) for p in read_manifest(manifest)]


def augment(spec: np.ndarray, sar: np.ndarray, labels: np.ndarray, rng: np.random.Generator):
    """Random multiple-of-90-degree rotation followed by an optional horizontal flip."""
    k = int(rng.integers(4))
    flip = bool(rng.integers(2))
    out = []
    for arr in (spec, sar, labels):
        arr = np.rot90(arr, k, axes=(-2, -1))
        if flip:
            arr = arr[..., ::-1]
        out.append(np.ascontiguousarray(arr))
    return tuple(out)


def stack_batch(samples: Sequence[PatchSample], rng: Optional[np.random.Generator] = None,
                dtype=np.float32):
    specs, sars, labels = [], [], []
    for s in samples:
        spec, sar, lab = s.spec, s.sar, s.labels
        if rng is not None:
            spec, sar, lab = augment(spec, sar, lab, rng)
        specs.append(spec)
        sars.append(sar)
        labels.append(lab)
    return (np.stack(specs).astype(dtype), np.stack(sars).astype(dtype),
            np.stack(labels).astype(np.int64))


# ---- training --------------------------------------------------------------------


@dataclass
class TrainSettings:
    lr: float = 5e-4
    batch_size: int = 4
    epochs: int = 20
    steps: int = 0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    augment: bool = True
    loss: str = "focal"
    focal: FocalConfig = field(default_factory=FocalConfig)
    seed: int = 0

    def total_steps(self, n_samples: int) -> int:
        if self.steps > 0:
            return self.steps
        return self.epochs * math.ceil(n_samples / self.batch_size)


@dataclass
class StepRecord:
    step: int
    lr: float
    loss: float

    def line(self) -> str:
        return f"{self.step} {self.lr!r} {self.loss!r}"


def _loss_on_batch(net: SpecSarFormer, spec, sar, labels, settings: TrainSettings) -> Tensor:
    logits = net(Tensor(spec), Tensor(sar))
    target = resize_nearest(labels, *logits.shape[2:])
    return compute_loss(settings.loss, logits, target, settings.focal)


def train_model(net: SpecSarFormer, samples: Sequence[PatchSample], settings: TrainSettings,
                on_step: Optional[Callable[[StepRecord], None]] = None,
                on_epoch: Optional[Callable[[int], None]] = None) -> list[StepRecord]:
    """Train ``net`` in place with AdamW and a cosine schedule."""
    if not samples:
        raise ValueError("cannot train on an empty dataset")
    net.check_geometry(samples[0].size, samples[0].size)
    total = settings.total_steps(len(samples))
    opt = AdamW(net.parameters(), settings.lr, settings.betas, settings.eps, settings.weight_decay)
    order_rng = make_rng(derive_seed(settings.seed, ORDER_STREAM))
    dtype = net.parameters()[0].dtype
    records: list[StepRecord] = []
    step, epoch = 0, 0
    while step < total:
        perm = order_rng.permutation(len(samples))
        for start in range(0, len(samples), settings.batch_size):
            if step >= total:
                break
            batch = [samples[i] for i in perm[start : start + settings.batch_size]]
            spec, sar, labels = stack_batch(batch, order_rng if settings.augment else None, dtype)
            lr = cosine_lr(step, total, settings.lr)
            loss = _loss_on_batch(net, spec, sar, labels, settings)
            value = float(loss.data)
            if not math.isfinite(value):
                raise NumericalError(f"non-finite loss {value} at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step(lr)
            rec = StepRecord(step, lr, value)
            records.append(rec)
            if on_step:
                on_step(rec)
            step += 1
        epoch += 1
        if on_epoch:
            on_epoch(epoch)
    return records


# ---- evaluation ------------------------------------------------------------------


def predict(net: SpecSarFormer, sample: PatchSample, full_resolution: bool = True) -> np.ndarray:
    dtype = net.parameters()[0].dtype
    spec, sar, _ = stack_batch([sample], None, dtype)
    with no_grad():
        logits = net(Tensor(spec), Tensor(sar))
    size = (sample.size, sample.size) if full_resolution else None
    return logits_to_labels(logits, size)[0]


def evaluate(net: SpecSarFormer, samples: Sequence[PatchSample], n_classes: int = 9,
             batch_size: int = 8) -> ConfusionMatrix:
    """Confusion matrix at full label resolution (predictions upsampled nearest)."""
    cm = ConfusionMatrix.empty(n_classes)
    dtype = net.parameters()[0].dtype
    for start in range(0, len(samples), batch_size):
        batch = samples[start : start + batch_size]
        spec, sar, labels = stack_batch(batch, None, dtype)
        with no_grad():
            logits = net(Tensor(spec), Tensor(sar))
        pred = logits_to_labels(logits, labels.shape[-2:])
        cm = accumulate(cm, pred, labels)
    return cm


def measure_fps(net: SpecSarFormer, sample: PatchSample, repeats: int = 5) -> float:
    """Forward passes per second at batch size 1 (after one warm-up pass)."""
    predict(net, sample)
    t0 = time.perf_counter()
    for _ in range(repeats):
        predict(net, sample)
    return repeats / (time.perf_counter() - t0)
