"""Full dual-branch segmentation network."""

from __future__ import annotations

from collections import OrderedDict

import numpy as np

from specsar.autodiff.nn import Module, ModuleList, initialize, make_rng
from specsar.autodiff.tensor import Tensor
from specsar.errors import ConfigError, DimensionError
from specsar.model.config import NetConfig
from specsar.model.decoder import AllMLPDecoder
from specsar.model.encoder import BranchFeatures, EncoderStage, OverlapPatchEmbed
from specsar.model.fusion import MutualModalAggregation, mmam_fuse, stage_transition


class SpecSarFormer(Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        s1 = cfg.stages[0]
        # registration order below is also the initialization draw order
        self.embed_spec = OverlapPatchEmbed(cfg.in_spec, s1.spec_channels, stage=1)
        self.embed_sar = OverlapPatchEmbed(cfg.in_sar, s1.sar_channels, stage=1)
        self.stages = ModuleList()
        self.fusers = ModuleList()
        self.merges = ModuleList()
        for i, st in enumerate(cfg.stages):
            if i > 0:
                self.merges.append(OverlapPatchEmbed(cfg.stages[i - 1].channels, st.channels, stage=i + 1))
            self.stages.append(EncoderStage(st, cross_attention=cfg.cross_attention))
            if cfg.mmam:
                self.fusers.append(
                    MutualModalAggregation(st.spec_channels, st.sar_channels, cfg.mmam_reduction)
                )
        self.decoder = AllMLPDecoder([s.channels for s in cfg.stages], cfg.decoder_dim, cfg.n_classes)

    def stage_sizes(self, h: int, w: int) -> list[tuple[int, int]]:
        sizes = []
        h, w = self.embed_spec.output_size(h, w)
        sizes.append((h, w))
        for merge in self.merges:
            h, w = merge.output_size(h, w)
            sizes.append((h, w))
        return sizes

    def check_geometry(self, h: int, w: int) -> None:
        """Reject input sizes the stages cannot process, before any compute."""
        if h < 7 or w < 7:
            raise DimensionError(f"input {h}x{w} is smaller than the 7x7 stem kernel")
        for st, (sh, sw) in zip(self.cfg.stages, self.stage_sizes(h, w)):
            if (sh * sw) % st.reduction:
                raise ConfigError(
                    f"stage with {sh}x{sw} tokens cannot be reduced by ratio {st.reduction}"
                )

    def features(self, spec: Tensor, sar: Tensor) -> list[Tensor]:
        """Fused per-stage maps F1..F4."""
        if spec.ndim != 4 or sar.ndim != 4:
            raise DimensionError(f"inputs must be NCHW, got {spec.shape} and {sar.shape}")
        if spec.shape[1] != self.cfg.in_spec or sar.shape[1] != self.cfg.in_sar:
            raise DimensionError(
                f"expected {self.cfg.in_spec}+{self.cfg.in_sar} input bands, "
                f"got {spec.shape[1]}+{sar.shape[1]}"
            )
        if spec.shape[0] != sar.shape[0] or spec.shape[2:] != sar.shape[2:]:
            raise DimensionError(f"modalities are not co-registered: {spec.shape} vs {sar.shape}")
        self.check_geometry(*spec.shape[2:])
        feats = BranchFeatures(self.embed_spec(spec), self.embed_sar(sar))
        pyramid = []
        for i, stage in enumerate(self.stages):
            if i > 0:
                feats = stage_transition(pyramid[-1], self.merges[i - 1], self.cfg.stages[i])
            feats = stage(feats)
            fuser = self.fusers[i] if self.cfg.mmam else None
            pyramid.append(mmam_fuse(feats.spec, feats.sar, fuser))
        return pyramid

    def forward(self, spec: Tensor, sar: Tensor) -> Tensor:
        """Class logits at 1/4 of the input resolution, NCHW."""
        return self.decoder(self.features(spec, sar))

    def flops_breakdown(self, h: int, w: int, batch: int = 1) -> "OrderedDict[str, int]":
        """Per-module FLOPs (2 per multiply-accumulate) for an ``h`` x ``w`` input."""
        sizes = self.stage_sizes(h, w)
        parts: OrderedDict[str, int] = OrderedDict()
        parts["embed_spec"] = self.embed_spec.macs(h, w)
        parts["embed_sar"] = self.embed_sar.macs(h, w)
        for i, stage in enumerate(self.stages):
            if i > 0:
                parts[f"merges.{i - 1}"] = self.merges[i - 1].macs(*sizes[i - 1])
            parts[f"stages.{i}"] = stage.macs(*sizes[i])
            if self.cfg.mmam:
                parts[f"fusers.{i}"] = self.fusers[i].macs()
        parts["decoder"] = self.decoder.macs(sizes)
        return OrderedDict((k, 2 * batch * v) for k, v in parts.items())


def build_network(cfg: NetConfig, seed: int = 0, dtype=np.float32, init: bool = True) -> SpecSarFormer:
    net = SpecSarFormer(cfg)
    if init:
        initialize(net, make_rng(seed))
    if np.dtype(dtype) != np.float32:
        net.to(dtype)
    return net
