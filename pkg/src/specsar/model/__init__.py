from specsar.model.config import NetConfig, StageConfig
from specsar.model.network import SpecSarFormer, build_network

__all__ = ["NetConfig", "SpecSarFormer", "StageConfig", "build_network"]
