"""Finite-difference gradient suite over every differentiable op and the full network.

Each case builds float64 leaves, reduces the op output to a scalar through a
fixed random weighting (so every output entry contributes a distinct
coefficient), and compares backward() against central differences.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, Iterator, Optional

import numpy as np

from specsar.autodiff import functional as F
from specsar.autodiff.gradcheck import GradCheckResult, check_gradients
from specsar.autodiff.nn import initialize, make_rng
from specsar.autodiff.tensor import (
    Tensor, add, concat, div, exp, log, matmul, mean, mul, power, reshape, split, sub, sum_, transpose,
)
from specsar.losses import FocalConfig, bce_loss, ce_loss, focal_loss
from specsar.model.config import NetConfig
from specsar.model.encoder import CrossAttention, EfficientSelfAttention, MixFFN, attend
from specsar.model.fusion import MutualModalAggregation
from specsar.model.network import build_network

SHAPES = ((5,), (3, 4), (2, 3, 4))


@dataclass
class Case:
    name: str
    fn: Callable[[], Tensor]
    inputs: list
    per_input: Optional[int] = None


def _leaf(rng, shape, low=-1.0, high=1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True, dtype=np.float64)


def _weighted(out_fn: Callable[[], Tensor], rng) -> Callable[[], Tensor]:
    """Scalarize ``out_fn()`` by a fixed random weighting of its entries."""
    cache = {}

    def fn():
        out = out_fn()
        if "w" not in cache:
            cache["w"] = Tensor(rng.normal(size=out.shape) / np.sqrt(max(out.size, 1)))
        return (out * cache["w"]).sum()

    return fn


def _elementwise_cases(rng) -> Iterator[Case]:
    unary = {
        "exp": (exp, -1.0, 1.0),
        "log": (log, 0.5, 2.0),
        "power": (lambda a: power(a, 2.5), 0.5, 2.0),
        "gelu": (F.gelu, -3.0, 3.0),
        "sigmoid": (F.sigmoid, -4.0, 4.0),
        "softplus": (F.softplus, -4.0, 4.0),
        "sum": (lambda a: sum_(a, axis=-1), -1.0, 1.0),
        "mean": (lambda a: mean(a, axis=0, keepdims=True), -1.0, 1.0),
        "softmax": (lambda a: F.softmax(a, axis=-1), -2.0, 2.0),
        "log_softmax": (lambda a: F.log_softmax(a, axis=-1), -2.0, 2.0),
    }
    for name, (op, lo, hi) in unary.items():
        for shape in SHAPES:
            a = _leaf(rng, shape, lo, hi)
            yield Case(f"{name}{list(shape)}", _weighted(lambda op=op, a=a: op(a), rng), [a])
    binary = {"add": add, "sub": sub, "mul": mul, "div": div}
    for name, op in binary.items():
        for shape in SHAPES:
            a = _leaf(rng, shape)
            b = _leaf(rng, shape[-1:], 0.5, 2.0)  # broadcasts over the leading axes
            yield Case(f"{name}{list(shape)}", _weighted(lambda op=op, a=a, b=b: op(a, b), rng), [a, b])


def _structural_cases(rng) -> Iterator[Case]:
    for m, k, n, batch in ((3, 4, 2, ()), (2, 5, 3, (2,)), (4, 3, 4, (2, 2))):
        a, b = _leaf(rng, (*batch, m, k)), _leaf(rng, (k, n))
        yield Case(f"matmul{[*batch, m, k]}x{[k, n]}", _weighted(lambda a=a, b=b: matmul(a, b), rng), [a, b])
    for shape in ((2, 6), (2, 3, 4), (4, 1, 3, 2)):
        a = _leaf(rng, shape)
        yield Case(f"reshape{list(shape)}", _weighted(lambda a=a: reshape(a, (-1,)), rng), [a])
        axes = tuple(reversed(range(len(shape))))
        yield Case(f"transpose{list(shape)}", _weighted(lambda a=a, ax=axes: transpose(a, ax), rng), [a])
    for shape in ((4,), (2, 5), (2, 3, 6)):
        a, b = _leaf(rng, shape), _leaf(rng, shape)
        yield Case(f"concat{list(shape)}", _weighted(lambda a=a, b=b: concat([a, b], axis=-1), rng), [a, b])
        sizes = [1, shape[-1] - 1]
        yield Case(f"split{list(shape)}",
                   _weighted(lambda a=a, s=sizes: split(a, s, axis=-1)[1] * 2.0 + split(a, s, axis=-1)[0].sum(), rng),
                   [a])


def _layer_cases(rng) -> Iterator[Case]:
    for shape in ((2, 4), (2, 3, 5), (1, 2, 3, 6)):
        x, g, b = _leaf(rng, shape), _leaf(rng, shape[-1:], 0.5, 1.5), _leaf(rng, shape[-1:])
        yield Case(f"layer_norm{list(shape)}", _weighted(lambda x=x, g=g, b=b: F.layer_norm(x, g, b), rng), [x, g, b])
        w, bias = _leaf(rng, (shape[-1], 3)), _leaf(rng, (3,))
        yield Case(f"linear{list(shape)}", _weighted(lambda x=x, w=w, c=bias: F.linear(x, w, c), rng), [x, w, bias])
    conv_geoms = (  # (b, c_in, h, w, c_out, k, stride, pad, groups)
        (1, 2, 5, 5, 3, 3, 1, 1, 1),
        (2, 3, 7, 6, 2, 3, 2, 1, 1),
        (1, 2, 9, 9, 4, 7, 4, 3, 1),
        (2, 4, 5, 5, 4, 3, 1, 1, 4),
    )
    for b_, ci, h, w_, co, k, s, p, g in conv_geoms:
        x = _leaf(rng, (b_, ci, h, w_))
        wt = _leaf(rng, (co, ci // g, k, k))
        bias = _leaf(rng, (co,))
        name = f"conv2d{[b_, ci, h, w_]}k{k}s{s}p{p}g{g}"
        yield Case(name, _weighted(lambda x=x, wt=wt, bi=bias, s=s, p=p, g=g: F.conv2d(x, wt, bi, s, p, g), rng),
                   [x, wt, bias])
    for shape, out in (((1, 2, 2, 3), (4, 6)), ((2, 1, 3, 3), (12, 12)), ((1, 3, 4, 2), (8, 8))):
        x = _leaf(rng, shape)
        yield Case(f"bilinear_upsample{list(shape)}->{list(out)}",
                   _weighted(lambda x=x, o=out: F.bilinear_upsample(x, *o), rng), [x])
    for b_, n, c, heads in ((1, 4, 4, 1), (2, 6, 6, 2), (1, 8, 6, 3)):
        q, k_, v = _leaf(rng, (b_, n, c)), _leaf(rng, (b_, n, c)), _leaf(rng, (b_, n, c))
        yield Case(f"attend{[b_, n, c]}h{heads}", _weighted(lambda q=q, k=k_, v=v, h=heads: attend(q, k, v, h), rng),
                   [q, k_, v])


def _module_case(name, module, inputs, call, rng, per_input=6) -> Case:
    module.to(np.float64)
    params = module.parameters()
    for p in params:
        p.requires_grad = True
    return Case(name, _weighted(call, rng), list(inputs) + params, per_input)


def _module_cases(rng) -> Iterator[Case]:
    init_rng = make_rng(7)
    esa = EfficientSelfAttention(8, 2, reduction=4)
    initialize(esa, init_rng)
    x = _leaf(rng, (2, 16, 8))
    yield _module_case("efficient_self_attention[R=4]", esa, [x], lambda: esa(x), rng)
    ca = CrossAttention(6, 4, 2, reduction=2)
    initialize(ca, init_rng)
    p, a = _leaf(rng, (1, 8, 6)), _leaf(rng, (1, 8, 4))
    yield _module_case("cross_attention[R=2]", ca, [p, a], lambda: ca(p, a), rng)
    ffn = MixFFN(4, 2)
    initialize(ffn, init_rng)
    t = _leaf(rng, (1, 12, 4))
    yield _module_case("mix_ffn[3x4]", ffn, [t], lambda: ffn(t, 3, 4), rng)
    mm = MutualModalAggregation(6, 2, 2)
    initialize(mm, init_rng)
    s, r = _leaf(rng, (2, 6, 3, 3)), _leaf(rng, (2, 2, 3, 3))
    yield _module_case("mmam", mm, [s, r], lambda: mm(s, r), rng)
    logits = _leaf(rng, (2, 4, 3, 3), -2.0, 2.0)
    labels = rng.integers(0, 4, size=(2, 3, 3))
    focal = FocalConfig(2.0, (0.5, 1.0, 1.5, 2.0))
    yield Case("focal_loss", lambda: focal_loss(logits, labels, focal), [logits])
    yield Case("ce_loss", lambda: ce_loss(logits, labels), [logits])
    yield Case("bce_loss", lambda: bce_loss(logits, labels), [logits])


def network_case(rng, size: int = 32, per_input: int = 3) -> Case:
    """Desk-scale network on one 32x32 input, focal loss on its logits."""
    net = build_network(NetConfig.desk(), seed=0, dtype=np.float64)
    for prm in net.parameters():
        prm.requires_grad = True
    spec = _leaf(rng, (1, net.cfg.in_spec, size, size), 0.0, 1.0)
    sar = _leaf(rng, (1, net.cfg.in_sar, size, size), 0.0, 1.0)
    labels = rng.integers(0, net.cfg.n_classes, size=(1, size // 4, size // 4))
    focal = FocalConfig(2.0, None)
    return Case(f"network[desk,{size}x{size}]", lambda: focal_loss(net(spec, sar), labels, focal),
                [spec, sar, *net.parameters()], per_input)


def all_cases(seed: int = 0, include_network: bool = True) -> list[Case]:
    rng = make_rng(seed)
    cases = [*_elementwise_cases(rng), *_structural_cases(rng), *_layer_cases(rng), *_module_cases(rng)]
    if include_network:
        cases.append(network_case(rng))
    return cases


def run_suite(seed: int = 0, include_network: bool = True,
              report: Optional[Callable[[GradCheckResult, float], None]] = None) -> list[GradCheckResult]:
    results = []
    for case in all_cases(seed, include_network):
        t0 = time.perf_counter()
        res = check_gradients(case.fn, case.inputs, case.name, per_input=case.per_input, seed=seed)
        results.append(res)
        if report:
            report(res, time.perf_counter() - t0)
    return results
