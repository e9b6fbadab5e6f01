"""Parameter and FLOP counters.

FLOPs count two per multiply-accumulate in linear layers, convolutions and the
two attention contractions (QK^T and AV). Norms, activations, pooling, softmax
and upsampling are left out.
"""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from specsar.autodiff.tensor import Tensor, count_macs, no_grad
from specsar.model.network import SpecSarFormer

# published figures for the full model: 26.70 M parameters, 109.59 GFLOPs
PAPER_PARAMS = 26.70e6
PAPER_FLOPS = 109.59e9
PARAM_TOLERANCE = 0.20
FLOP_TOLERANCE = 0.25


def count_params(net: SpecSarFormer) -> int:
    return sum(p.size for p in net.parameters())


def param_breakdown(net: SpecSarFormer) -> "OrderedDict[str, int]":
    """Trainable scalars per top-level module (per stage for the ModuleLists)."""
    parts: OrderedDict[str, int] = OrderedDict()
    for name, p in net.named_parameters():
        head = name.split(".")
        key = ".".join(head[:2]) if head[0] in ("stages", "fusers", "merges") else head[0]
        parts[key] = parts.get(key, 0) + p.size
    return parts


def flops_breakdown(net: SpecSarFormer, input_shape) -> "OrderedDict[str, int]":
    """``input_shape`` is (H, W) or (b, c, H, W)."""
    if len(input_shape) == 4:
        b, _, h, w = input_shape
    else:
        b, (h, w) = 1, input_shape
    return net.flops_breakdown(h, w, b)


def count_flops(net: SpecSarFormer, input_shape) -> int:
    return sum(flops_breakdown(net, input_shape).values())


def measured_flops(net: SpecSarFormer, h: int, w: int, batch: int = 1) -> int:
    """FLOPs tallied by running a real forward pass; cross-checks :func:`count_flops`."""
    dtype = net.parameters()[0].dtype
    spec = Tensor(np.zeros((batch, net.cfg.in_spec, h, w), dtype=dtype))
    sar = Tensor(np.zeros((batch, net.cfg.in_sar, h, w), dtype=dtype))
    with no_grad(), count_macs() as tally:
        net(spec, sar)
    return 2 * tally[0]


def format_report(net: SpecSarFormer, h: int, w: int, compare_paper: bool = False) -> str:
    """Human-readable breakdown followed by machine-readable key=value lines."""
    params = param_breakdown(net)
    flops = flops_breakdown(net, (h, w))
    n_params = sum(params.values())
    n_flops = sum(flops.values())
    lines = [f"# model={net.cfg.name} input={h}x{w} bands={net.cfg.in_spec}+{net.cfg.in_sar}",
             "# FLOPs = 2 x multiply-accumulates in linear/conv/attention; "
             "norms, activations and upsampling excluded",
             f"{'module':<14}{'params':>14}{'GFLOPs':>12}"]
    for key in dict.fromkeys(list(params) + list(flops)):
        lines.append(f"{key:<14}{params.get(key, 0):>14,}{flops.get(key, 0) / 1e9:>12.4f}")
    lines.append(f"{'total':<14}{n_params:>14,}{n_flops / 1e9:>12.4f}")
    if compare_paper:
        dp = n_params / PAPER_PARAMS - 1.0
        df = n_flops / PAPER_FLOPS - 1.0
        lines.append(f"# vs published: params {dp:+.2%} (limit +-{PARAM_TOLERANCE:.0%}), "
                     f"FLOPs {df:+.2%} (limit +-{FLOP_TOLERANCE:.0%})")
    lines.append(f"params={n_params}")
    lines.append(f"flops={n_flops}")
    return "\n".join(lines) + "\n"
