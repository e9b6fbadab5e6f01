"""Mutual modal aggregation: GAP-driven per-channel gating of both branches."""

from __future__ import annotations

from specsar.autodiff import functional as F
from specsar.autodiff.nn import Linear, Module
from specsar.autodiff.tensor import Tensor, concat, split
from specsar.errors import DimensionError
from specsar.model.config import StageConfig
from specsar.model.encoder import BranchFeatures, OverlapPatchEmbed


class GateMLP(Module):
    """Squeeze C -> C/r, GELU, expand to one gate logit per branch channel."""

    def __init__(self, c_in: int, c_out: int, reduction: int):
        super().__init__()
        hidden = max(1, c_in // reduction)
        self.squeeze = Linear(c_in, hidden)
        self.expand = Linear(hidden, c_out)

    def forward(self, z: Tensor) -> Tensor:
        return self.expand(F.gelu(self.squeeze(z)))

    def macs(self) -> int:
        return self.squeeze.macs(1) + self.expand.macs(1)


class MutualModalAggregation(Module):
    def __init__(self, spec_channels: int, sar_channels: int, reduction: int = 4):
        super().__init__()
        c = spec_channels + sar_channels
        self.spec_channels, self.sar_channels = spec_channels, sar_channels
        self.gate_spec = GateMLP(c, spec_channels, reduction)
        self.gate_sar = GateMLP(c, sar_channels, reduction)

    def gates(self, spec: Tensor, sar: Tensor) -> tuple[Tensor, Tensor]:
        """Per-channel sigmoid gates, shaped (b, C_branch, 1, 1)."""
        if spec.shape[0] != sar.shape[0] or spec.shape[2:] != sar.shape[2:]:
            raise DimensionError(f"MMAM inputs disagree spatially: {spec.shape} vs {sar.shape}")
        b = spec.shape[0]
        z = concat([spec, sar], axis=1).mean(axis=(2, 3))
        m1 = F.sigmoid(self.gate_spec(z)).reshape(b, self.spec_channels, 1, 1)
        m2 = F.sigmoid(self.gate_sar(z)).reshape(b, self.sar_channels, 1, 1)
        return m1, m2

    def forward(self, spec: Tensor, sar: Tensor) -> Tensor:
        m1, m2 = self.gates(spec, sar)
        return concat([spec * m1, sar * m2], axis=1)

    def macs(self, batch: int = 1) -> int:
        return batch * (self.gate_spec.macs() + self.gate_sar.macs())


def mmam_fuse(spec: Tensor, sar: Tensor, module: MutualModalAggregation | None) -> Tensor:
    """Fuse two branch maps; ``module=None`` is the plain-concatenation ablation."""
    if module is None:
        if spec.shape[0] != sar.shape[0] or spec.shape[2:] != sar.shape[2:]:
            raise DimensionError(f"fusion inputs disagree spatially: {spec.shape} vs {sar.shape}")
        return concat([spec, sar], axis=1)
    return module(spec, sar)


def stage_transition(fused: Tensor, merge: OverlapPatchEmbed, next_stage: StageConfig) -> BranchFeatures:
    """Patch-merge the fused map, then split channels into the next stage's branches."""
    merged = merge(fused)
    if merged.shape[1] != next_stage.channels:
        raise DimensionError(
            f"merged map has {merged.shape[1]} channels, stage expects {next_stage.channels}"
        )
    spec, sar = split(merged, [next_stage.spec_channels, next_stage.sar_channels], axis=1)
    return BranchFeatures(spec, sar)
