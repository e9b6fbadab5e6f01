"""Segmentation losses: alpha-balanced focal loss plus CE and one-vs-all BCE."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from specsar.autodiff import functional as F
from specsar.autodiff.tensor import Tensor, exp
from specsar.errors import ConfigError, DataError


@dataclass(frozen=True)
class FocalConfig:
    gamma: float = 2.0
    alpha: Optional[tuple[float, ...]] = None  # None means all ones

    def __post_init__(self):
        if self.gamma < 0:
            raise ConfigError(f"focal gamma must be >= 0, got {self.gamma}")
        if self.alpha is not None and any(a <= 0 for a in self.alpha):
            raise ConfigError(f"all alpha weights must be positive, got {self.alpha}")


def inverse_frequency_alpha(histogram: Sequence[int]) -> tuple[float, ...]:
    """Per-class weights proportional to 1/frequency, normalized to mean 1.

    The mean runs over classes that occur in ``histogram``. Absent classes never
    contribute to the loss on that data; they get the largest present weight so
    every entry stays finite.
    """
    counts = np.asarray(histogram, dtype=np.float64)
    present = counts > 0
    if not present.any():
        return tuple(1.0 for _ in counts)
    inv = np.zeros_like(counts)
    inv[present] = counts[present].sum() / counts[present]
    inv /= inv[present].mean()
    inv[~present] = inv[present].max()
    return tuple(float(a) for a in inv)


def _one_hot(labels: np.ndarray, logits: Tensor) -> Tensor:
    labels = np.asarray(labels)
    n_cls = logits.shape[1]
    if labels.shape != (logits.shape[0], *logits.shape[2:]):
        raise DataError(f"labels {labels.shape} do not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_cls):
        raise DataError(f"label values must lie in 0..{n_cls - 1}, got {labels.min()}..{labels.max()}")
    eye = np.eye(n_cls, dtype=logits.dtype)
    return Tensor(np.moveaxis(eye[labels], -1, 1))


def _true_class_log_prob(logits: Tensor, labels) -> Tensor:
    onehot = _one_hot(labels, logits)
    return (F.log_softmax(logits, axis=1) * onehot).sum(axis=1)


def ce_loss(logits: Tensor, labels) -> Tensor:
    """Mean softmax cross-entropy over all pixels; logits are (b, K, h, w)."""
    return -_true_class_log_prob(logits, labels).mean()


def focal_loss(logits: Tensor, labels, cfg: FocalConfig = FocalConfig()) -> Tensor:
    """Mean of -alpha_t (1 - p_t)^gamma log p_t over all pixels."""
    logpt = _true_class_log_prob(logits, labels)
    weighted = logpt
    if cfg.gamma != 0:
        weighted = weighted * (1.0 - exp(logpt)) ** cfg.gamma
    if cfg.alpha is not None:
        if len(cfg.alpha) != logits.shape[1]:
            raise ConfigError(f"alpha has {len(cfg.alpha)} entries for {logits.shape[1]} classes")
        alpha = np.asarray(cfg.alpha, dtype=logits.dtype)[np.asarray(labels)]
        weighted = weighted * Tensor(alpha)
    return -weighted.mean()


def bce_loss(logits: Tensor, labels) -> Tensor:
    """One-vs-all sigmoid BCE against one-hot targets, averaged over pixels and classes."""
    onehot = _one_hot(labels, logits)
    return (F.softplus(logits) - logits * onehot).mean()


LOSSES = {"focal": focal_loss, "ce": ce_loss, "bce": bce_loss}


def compute_loss(kind: str, logits: Tensor, labels, focal: FocalConfig = FocalConfig()) -> Tensor:
    if kind == "focal":
        return focal_loss(logits, labels, focal)
    if kind not in LOSSES:
        raise ConfigError(f"unknown loss {kind!r}; choose from {sorted(LOSSES)}")
    return LOSSES[kind](logits, labels)
