"""Central finite-difference checks for the tape's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from specsar.autodiff.tensor import Tensor, no_grad

STEP = 1e-5
TOLERANCE = 1e-4
# entries whose true magnitude is below this are compared absolutely
DENOM_FLOOR = 1e-6


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    checked: int

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), DENOM_FLOOR)
    return np.abs(analytic - numeric) / denom


def numerical_gradient(fn: Callable[[], Tensor], x: Tensor, indices: Sequence[tuple],
                       step: float = STEP) -> np.ndarray:
    """d fn() / d x at the given multi-indices by central differences."""
    out = np.empty(len(indices))
    with no_grad():
        for n, idx in enumerate(indices):
            orig = x.data[idx]
            x.data[idx] = orig + step
            plus = float(fn().data.sum())
            x.data[idx] = orig - step
            minus = float(fn().data.sum())
            x.data[idx] = orig
            out[n] = (plus - minus) / (2.0 * step)
    return out


def sample_indices(shape: tuple, limit: Optional[int], rng: np.random.Generator) -> list[tuple]:
    total = int(np.prod(shape, dtype=np.int64))
    if limit is None or total <= limit:
        flat = np.arange(total)
    else:
        flat = np.sort(rng.choice(total, size=limit, replace=False))
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in flat]


def check_gradients(fn: Callable[[], Tensor], inputs: Sequence[Tensor], name: str = "",
                    per_input: Optional[int] = None, seed: int = 0,
                    step: float = STEP) -> GradCheckResult:
    """Compare backward() of scalar ``fn()`` against finite differences.

    ``inputs`` must be float64 tensors with ``requires_grad``. When ``per_input``
    is set only that many randomly chosen entries of each input are probed.
    """
    for x in inputs:
        x.grad = None
    loss = fn()
    if loss.data.size != 1:
        loss = loss.sum()
    loss.backward()
    analytic = [np.zeros(x.shape) if x.grad is None else x.grad.copy() for x in inputs]

    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    checked = 0
    for x, ga in zip(inputs, analytic):
        idx = sample_indices(x.shape, per_input, rng)
        gn = numerical_gradient(fn, x, idx, step)
        ga_sel = np.array([ga[i] for i in idx])
        if len(idx):
            worst = max(worst, float(relative_error(ga_sel, gn).max()))
        checked += len(idx)
    return GradCheckResult(name, worst, checked)
