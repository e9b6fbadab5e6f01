from specsar.data.patchio import (
    read_label_file,
    read_manifest,
    read_patch,
    write_label_file,
    write_manifest,
    write_patch,
)
from specsar.data.synth import (
    PatchSample,
    SarTimeSeries,
    World,
    class_histogram,
    composite_sar,
    generate_scene,
    make_patch,
)

__all__ = [
    "PatchSample",
    "SarTimeSeries",
    "World",
    "class_histogram",
    "composite_sar",
    "generate_scene",
    "make_patch",
    "read_label_file",
    "read_manifest",
    "read_patch",
    "write_label_file",
    "write_manifest",
    "write_patch",
]
