"""Minimal module system: parameter registration, layers and initialization."""

from __future__ import annotations

from collections import OrderedDict
from typing import Iterator

import numpy as np

from specsar.autodiff import functional as F
from specsar.autodiff.tensor import Tensor
from specsar.errors import DimensionError

TRUNC_STD = 0.02


class Parameter(Tensor):
    """A trainable leaf. ``init`` names the scheme used by :func:`initialize`."""

    __slots__ = ("init", "fan_out")

    def __init__(self, shape, init: str = "zeros", fan_out: int = 0, dtype=np.float32):
        super().__init__(np.zeros(shape, dtype=dtype), requires_grad=True)
        self.init = init
        self.fan_out = fan_out


class Module:
    """Container that records sub-modules and parameters in assignment order."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_modules(self, prefix: str = "") -> Iterator[tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, m in self._modules.items():
            yield from m.named_modules(prefix + name + ".")

    def children(self) -> Iterator[tuple[str, "Module"]]:
        return iter(self._modules.items())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data) for n, p in self.named_parameters())

    def load_state_dict(self, state) -> None:
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        extra = state.keys() - own.keys()
        if missing or extra:
            raise DimensionError(
                f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name, arr in state.items():
            p = own[name]
            if p.shape != arr.shape:
                raise DimensionError(f"{name}: expected shape {p.shape}, got {arr.shape}")
            p.data = np.array(arr, dtype=p.dtype)

    def to(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, m: Module) -> None:
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Linear(Module):
    """Token-wise affine map over the trailing axis."""

    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = Parameter((in_features, out_features), init="trunc_normal")
        self.bias = Parameter((out_features,), init="zeros") if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)

    def macs(self, tokens: int) -> int:
        return tokens * self.in_features * self.out_features


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int = 1, padding: int = 0,
                 groups: int = 1, bias: bool = True):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.kernel, self.stride, self.padding, self.groups = kernel, stride, padding, groups
        fan_out = kernel * kernel * c_out // groups
        self.weight = Parameter((c_out, c_in // groups, kernel, kernel), init="conv", fan_out=fan_out)
        self.bias = Parameter((c_out,), init="zeros") if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        return (
            F.conv_output_size(h, self.kernel, self.stride, self.padding),
            F.conv_output_size(w, self.kernel, self.stride, self.padding),
        )

    def macs(self, h: int, w: int) -> int:
        oh, ow = self.output_size(h, w)
        return oh * ow * self.c_out * (self.c_in // self.groups) * self.kernel * self.kernel


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = F.LN_EPS):
        super().__init__()
        self.eps = eps
        self.weight = Parameter((dim,), init="ones")
        self.bias = Parameter((dim,), init="zeros")

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias, self.eps)


def _truncated_normal(rng: np.random.Generator, shape, std: float) -> np.ndarray:
    # redraw anything outside two standard deviations
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return out * std


def initialize(module: Module, rng: np.random.Generator) -> None:
    """Draw every parameter from ``rng`` in registration order."""
    for _, p in module.named_parameters():
        if p.init == "trunc_normal":
            values = _truncated_normal(rng, p.shape, TRUNC_STD)
        elif p.init == "conv":
            values = rng.standard_normal(p.shape) * np.sqrt(2.0 / p.fan_out)
        elif p.init == "ones":
            values = np.ones(p.shape)
        elif p.init == "zeros":
            values = np.zeros(p.shape)
        else:
            raise ValueError(f"unknown init scheme {p.init!r}")
        p.data = values.astype(p.dtype)
        p.grad = None


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator; the only RNG the package draws from."""
    return np.random.Generator(np.random.Philox(int(seed)))



def derive_seed(seed: int, *keys: int) -> int:
    """Independent sub-seed for a named purpose (data order, scene index, ...)."""
    return int(np.random.SeedSequence([int(seed), *keys]).generate_state(1)[0])
