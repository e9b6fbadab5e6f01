"""All-MLP decoder and label-map helpers."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from specsar.autodiff import functional as F
from specsar.autodiff.nn import Linear, Module, ModuleList
from specsar.autodiff.tensor import Tensor, concat
from specsar.errors import DimensionError
from specsar.model.encoder import map_to_tokens, tokens_to_map


class AllMLPDecoder(Module):
    """Project each pyramid level to ``dim``, upsample to level-1 size, fuse, classify.

    Levels are concatenated in stage order 1..4.
    """

    def __init__(self, in_channels: Sequence[int], dim: int, n_classes: int):
        super().__init__()
        self.in_channels = tuple(in_channels)
        self.dim, self.n_classes = dim, n_classes
        self.proj = ModuleList(Linear(c, dim) for c in in_channels)
        self.fuse = Linear(len(self.in_channels) * dim, dim)
        self.classify = Linear(dim, n_classes)

    def _check(self, pyramid: Sequence[Tensor]) -> None:
        if len(pyramid) != len(self.in_channels):
            raise DimensionError(f"decoder expects {len(self.in_channels)} maps, got {len(pyramid)}")
        for i, (f, c) in enumerate(zip(pyramid, self.in_channels)):
            if f.ndim != 4 or f.shape[1] != c:
                raise DimensionError(f"pyramid level {i + 1}: expected {c} channels, got {f.shape}")
        for i in range(1, len(pyramid)):
            ph, pw = pyramid[i - 1].shape[2:]
            expect = ((ph + 1) // 2, (pw + 1) // 2)
            if pyramid[i].shape[2:] != expect:
                raise DimensionError(
                    f"pyramid level {i + 1} is {pyramid[i].shape[2:]}, expected {expect} "
                    f"(half of level {i})"
                )

    def forward(self, pyramid: Sequence[Tensor]) -> Tensor:
        self._check(pyramid)
        h1, w1 = pyramid[0].shape[2:]
        ups = []
        for f, proj in zip(pyramid, self.proj):
            _, _, h, w = f.shape
            y = tokens_to_map(proj(map_to_tokens(f)), h, w)
            ups.append(F.bilinear_upsample(y, h1, w1))
        fused = self.fuse(map_to_tokens(concat(ups, axis=1)))
        return tokens_to_map(self.classify(fused), h1, w1)

    def macs(self, sizes: Sequence[tuple[int, int]]) -> int:
        h1, w1 = sizes[0]
        total = sum(p.macs(h * w) for p, (h, w) in zip(self.proj, sizes))
        return total + self.fuse.macs(h1 * w1) + self.classify.macs(h1 * w1)


def nearest_indices(n_in: int, n_out: int) -> np.ndarray:
    """Source index for each output index under half-pixel nearest resampling."""
    return np.minimum(((np.arange(n_out) + 0.5) * n_in / n_out).astype(np.int64), n_in - 1)


def resize_nearest(labels: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbour resize over the last two axes of an integer map."""
    h, w = labels.shape[-2:]
    rows = nearest_indices(h, out_h)
    cols = nearest_indices(w, out_w)
    return labels[..., rows[:, None], cols[None, :]]


def logits_to_labels(logits, out_size: Optional[tuple[int, int]] = None) -> np.ndarray:
    """Per-pixel argmax over the class axis (ties go to the lowest index)."""
    data = logits.data if isinstance(logits, Tensor) else np.asarray(logits)
    labels = np.argmax(data, axis=-3).astype(np.uint8)
    if out_size is not None:
        labels = resize_nearest(labels, *out_size)
    return labels
