"""AdamW with decoupled weight decay and a cosine-annealed learning rate."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from specsar.errors import ConfigError


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Cosine annealing from ``lr0`` at step 0 down to 0 at ``total_steps``."""
    if total_steps <= 0:
        return lr0
    if not 0 <= step <= total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def adamw_step(params, grads, m_bufs, v_bufs, t: int, lr: float,
               betas=(0.9, 0.999), eps: float = 1e-8, weight_decay: float = 0.01) -> None:
    """Apply one in-place AdamW update; ``t`` is the 1-based step count."""
    if lr < 0 or not math.isfinite(lr):
        raise ConfigError(f"learning rate must be a finite non-negative number, got {lr}")
    b1, b2 = betas
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, m_bufs, v_bufs):
        if g is None:
            continue
        # decay acts on the weights directly, never through the gradient
        p.data *= 1.0 - lr * weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        denom = np.sqrt(v / bc2) + eps
        p.data -= (lr / bc1) * m / denom


class AdamW:
    def __init__(self, params: Sequence, lr: float = 5e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.01):
        if lr < 0 or not math.isfinite(lr):
            raise ConfigError(f"learning rate must be a finite non-negative number, got {lr}")
        if not (0.0 <= betas[0] < 1.0 and 0.0 <= betas[1] < 1.0):
            raise ConfigError(f"betas must lie in [0, 1), got {betas}")
        if weight_decay < 0:
            raise ConfigError(f"weight decay must be >= 0, got {weight_decay}")
        self.params = list(params)
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float | None = None) -> None:
        self.t += 1
        adamw_step(
            self.params,
            [p.grad for p in self.params],
            self.m,
            self.v,
            self.t,
            self.lr if lr is None else lr,
            self.betas,
            self.eps,
            self.weight_decay,
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
