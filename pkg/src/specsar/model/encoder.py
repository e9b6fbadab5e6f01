"""Two-branch hierarchical encoder: patch embedding, efficient self-attention,
bidirectional cross-modal attention and Mix-FFN."""

from __future__ import annotations

import math
from dataclasses import dataclass

from specsar.autodiff import functional as F
from specsar.autodiff.nn import Conv2d, LayerNorm, Linear, Module, ModuleList
from specsar.autodiff.tensor import Tensor, matmul
from specsar.errors import ConfigError, DimensionError
from specsar.model.config import StageConfig


def tokens_to_map(x: Tensor, h: int, w: int) -> Tensor:
    b, n, c = x.shape
    if n != h * w:
        raise DimensionError(f"{n} tokens cannot be laid out as {h}x{w}")
    return x.transpose(0, 2, 1).reshape(b, c, h, w)


def map_to_tokens(x: Tensor) -> Tensor:
    b, c, h, w = x.shape
    return x.reshape(b, c, h * w).transpose(0, 2, 1)


@dataclass
class BranchFeatures:
    """Per-stage spectral and SAR maps, both NCHW with shared (b, h, w)."""

    spec: Tensor
    sar: Tensor

    def __post_init__(self):
        if self.spec.ndim != 4 or self.sar.ndim != 4:
            raise DimensionError("branch features must be NCHW maps")
        if (self.spec.shape[0], *self.spec.shape[2:]) != (self.sar.shape[0], *self.sar.shape[2:]):
            raise DimensionError(
                f"branch maps disagree on (b, h, w): {self.spec.shape} vs {self.sar.shape}"
            )

    @property
    def hw(self) -> tuple[int, int]:
        return self.spec.shape[2], self.spec.shape[3]


def attend(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Multi-head scaled dot-product attention on (b, n, c) token tensors."""
    b, n, c = q.shape
    m = k.shape[1]
    d = c // heads
    qh = q.reshape(b, n, heads, d).transpose(0, 2, 1, 3)
    kt = k.reshape(b, m, heads, d).transpose(0, 2, 3, 1)
    vh = v.reshape(b, m, heads, d).transpose(0, 2, 1, 3)
    scores = matmul(qh, kt) * (1.0 / math.sqrt(d))
    out = matmul(F.softmax(scores, axis=-1), vh)
    return out.transpose(0, 2, 1, 3).reshape(b, n, c)


class SequenceReduction(Module):
    """Fold ``ratio`` consecutive tokens into one wide token, project back, normalize."""

    def __init__(self, dim: int, ratio: int):
        super().__init__()
        self.ratio = ratio
        self.proj = Linear(dim * ratio, dim)
        self.norm = LayerNorm(dim)

    def forward(self, x: Tensor) -> Tensor:
        b, n, c = x.shape
        if n % self.ratio:
            raise ConfigError(f"sequence length {n} is not divisible by reduction ratio {self.ratio}")
        folded = x.reshape(b, n // self.ratio, c * self.ratio)
        return self.norm(self.proj(folded))

    def macs(self, n: int) -> int:
        return self.proj.macs(n // self.ratio)


class EfficientSelfAttention(Module):
    def __init__(self, dim: int, heads: int, reduction: int = 1):
        super().__init__()
        if dim % heads:
            raise ConfigError(f"dim {dim} not divisible by {heads} heads")
        self.dim, self.heads, self.reduction = dim, heads, reduction
        self.q = Linear(dim, dim)
        self.sr = SequenceReduction(dim, reduction) if reduction > 1 else None
        self.k = Linear(dim, dim)
        self.v = Linear(dim, dim)
        self.proj = Linear(dim, dim)

    def forward(self, x: Tensor) -> Tensor:
        kv = self.sr(x) if self.sr is not None else x
        return self.proj(attend(self.q(x), self.k(kv), self.v(kv), self.heads))

    def macs(self, n: int) -> int:
        m = n // self.reduction
        total = self.q.macs(n) + self.k.macs(m) + self.v.macs(m) + self.proj.macs(n)
        total += 2 * n * m * self.dim
        if self.sr is not None:
            total += self.sr.macs(n)
        return total


class CrossAttention(Module):
    """Inject an auxiliary modality into a primary one: x + Attn(norm(x), MLP(aux))."""

    def __init__(self, dim: int, aux_dim: int, heads: int, reduction: int = 1):
        super().__init__()
        if dim % heads:
            raise ConfigError(f"dim {dim} not divisible by {heads} heads")
        self.dim, self.aux_dim, self.heads, self.reduction = dim, aux_dim, heads, reduction
        self.adjust = Linear(aux_dim, dim)
        self.norm = LayerNorm(dim)
        self.q = Linear(dim, dim)
        self.sr = SequenceReduction(dim, reduction) if reduction > 1 else None
        self.k = Linear(dim, dim)
        self.v = Linear(dim, dim)
        self.proj = Linear(dim, dim)

    def forward(self, primary: Tensor, auxiliary: Tensor) -> Tensor:
        if primary.shape[:2] != auxiliary.shape[:2]:
            raise DimensionError(
                f"cross-attention token mismatch: primary {primary.shape}, auxiliary {auxiliary.shape}"
            )
        aux = self.adjust(auxiliary)
        if self.sr is not None:
            aux = self.sr(aux)
        q = self.q(self.norm(primary))
        return primary + self.proj(attend(q, self.k(aux), self.v(aux), self.heads))

    def macs(self, n: int) -> int:
        m = n // self.reduction
        total = self.adjust.macs(n) + self.q.macs(n) + self.k.macs(m) + self.v.macs(m)
        total += self.proj.macs(n) + 2 * n * m * self.dim
        if self.sr is not None:
            total += self.sr.macs(n)
        return total


class MixFFN(Module):
    """x + fc2(GELU(dwconv3x3(fc1(norm(x))))); the padded conv stands in for positions."""

    def __init__(self, dim: int, mlp_ratio: int = 4):
        super().__init__()
        hidden = dim * mlp_ratio
        self.dim, self.hidden = dim, hidden
        self.norm = LayerNorm(dim)
        self.fc1 = Linear(dim, hidden)
        self.dwconv = Conv2d(hidden, hidden, 3, stride=1, padding=1, groups=hidden)
        self.fc2 = Linear(hidden, dim)

    def forward(self, x: Tensor, h: int, w: int) -> Tensor:
        if x.shape[1] != h * w:
            raise DimensionError(f"Mix-FFN got {x.shape[1]} tokens for a {h}x{w} map")
        y = self.fc1(self.norm(x))
        y = map_to_tokens(self.dwconv(tokens_to_map(y, h, w)))
        return x + self.fc2(F.gelu(y))

    def macs(self, h: int, w: int) -> int:
        n = h * w
        return self.fc1.macs(n) + self.dwconv.macs(h, w) + self.fc2.macs(n)


class DualModalBlock(Module):
    """One encoder block acting on both branches."""

    def __init__(self, cfg: StageConfig, cross_attention: bool = True):
        super().__init__()
        cs, ca = cfg.spec_channels, cfg.sar_channels
        self.norm_spec = LayerNorm(cs)
        self.attn_spec = EfficientSelfAttention(cs, cfg.heads, cfg.reduction)
        self.norm_sar = LayerNorm(ca)
        self.attn_sar = EfficientSelfAttention(ca, cfg.heads, cfg.reduction)
        if cross_attention:
            self.sar_to_spec = CrossAttention(cs, ca, cfg.heads, cfg.reduction)
            self.spec_to_sar = CrossAttention(ca, cs, cfg.heads, cfg.reduction)
        else:
            self.sar_to_spec = self.spec_to_sar = None
        self.ffn_spec = MixFFN(cs, cfg.mlp_ratio)
        self.ffn_sar = MixFFN(ca, cfg.mlp_ratio)

    def forward(self, spec: Tensor, sar: Tensor, h: int, w: int) -> tuple[Tensor, Tensor]:
        spec = spec + self.attn_spec(self.norm_spec(spec))
        sar = sar + self.attn_sar(self.norm_sar(sar))
        if self.sar_to_spec is not None:
            # both directions read the post-self-attention features
            spec, sar = self.sar_to_spec(spec, sar), self.spec_to_sar(sar, spec)
        return self.ffn_spec(spec, h, w), self.ffn_sar(sar, h, w)

    def macs(self, h: int, w: int) -> int:
        n = h * w
        total = self.attn_spec.macs(n) + self.attn_sar.macs(n)
        total += self.ffn_spec.macs(h, w) + self.ffn_sar.macs(h, w)
        if self.sar_to_spec is not None:
            total += self.sar_to_spec.macs(n) + self.spec_to_sar.macs(n)
        return total


class OverlapPatchEmbed(Module):
    """Strided overlapping conv (7/4/3 for stage 1, 3/2/1 after) plus channel LayerNorm."""

    def __init__(self, c_in: int, c_out: int, stage: int):
        super().__init__()
        if stage == 1:
            kernel, stride, pad = 7, 4, 3
        elif stage in (2, 3, 4):
            kernel, stride, pad = 3, 2, 1
        else:
            raise ConfigError(f"stage must be 1..4, got {stage}")
        self.proj = Conv2d(c_in, c_out, kernel, stride, pad)
        self.norm = LayerNorm(c_out)

    def forward(self, x: Tensor) -> Tensor:
        """NCHW in, NCHW out at the reduced resolution."""
        y = self.proj(x)
        _, _, h, w = y.shape
        return tokens_to_map(self.norm(map_to_tokens(y)), h, w)

    def output_size(self, h: int, w: int) -> tuple[int, int]:
        return self.proj.output_size(h, w)

    def macs(self, h: int, w: int) -> int:
        return self.proj.macs(h, w)


class EncoderStage(Module):
    def __init__(self, cfg: StageConfig, cross_attention: bool = True):
        super().__init__()
        self.cfg = cfg
        self.blocks = ModuleList(DualModalBlock(cfg, cross_attention) for _ in range(cfg.depth))

    def forward(self, feats: BranchFeatures) -> BranchFeatures:
        h, w = feats.hw
        spec, sar = map_to_tokens(feats.spec), map_to_tokens(feats.sar)
        for block in self.blocks:
            spec, sar = block(spec, sar, h, w)
        return BranchFeatures(tokens_to_map(spec, h, w), tokens_to_map(sar, h, w))

    def macs(self, h: int, w: int) -> int:
        return sum(b.macs(h, w) for b in self.blocks)
