"""``DWPX`` patch files and dataset manifests.

Patch layout (little-endian)::

    b"DWPX" u32 version u16 size u8 n_spec u8 n_sar        (12-byte header)
    n_spec planes of float32, n_sar planes of float32     (planar, row-major)
    one uint8 label plane
    patch id, UTF-8, running to end of file

A prediction export is the same layout with n_spec = n_sar = 0.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from specsar.data.synth import PatchSample
from specsar.errors import FormatError
from specsar.model.config import N_CLASSES, N_SAR_BANDS, N_SPEC_BANDS

MAGIC = b"DWPX"
VERSION = 1
HEADER = struct.Struct("<4sIHBB")


def patch_file_size(size: int, n_spec: int = N_SPEC_BANDS, n_sar: int = N_SAR_BANDS,
                    patch_id: str = "") -> int:
    return HEADER.size + (n_spec + n_sar) * size * size * 4 + size * size + len(patch_id.encode("utf-8"))


def _encode(size: int, planes: list[np.ndarray], n_spec: int, n_sar: int,
            labels: np.ndarray, patch_id: str) -> bytes:
    parts = [HEADER.pack(MAGIC, VERSION, size, n_spec, n_sar)]
    parts += [np.ascontiguousarray(p, dtype="<f4").tobytes() for p in planes]
    parts.append(np.ascontiguousarray(labels, dtype=np.uint8).tobytes())
    parts.append(patch_id.encode("utf-8"))
    return b"".join(parts)


def _decode(buf: bytes):
    if len(buf) < HEADER.size:
        if buf[: min(4, len(buf))] != MAGIC[: min(4, len(buf))]:
            raise FormatError(f"bad magic {buf[:4]!r}", 0)
        raise FormatError("truncated header", len(buf))
    magic, version, size, n_spec, n_sar = HEADER.unpack_from(buf, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    pos = HEADER.size
    plane = size * size
    need = pos + (n_spec + n_sar) * plane * 4 + plane
    if len(buf) < need:
        raise FormatError(f"truncated payload: need {need} bytes, file has {len(buf)}", len(buf))
    bands = np.frombuffer(buf, dtype="<f4", count=(n_spec + n_sar) * plane, offset=pos)
    bands = bands.reshape(n_spec + n_sar, size, size).astype(np.float32)
    pos += (n_spec + n_sar) * plane * 4
    labels = np.frombuffer(buf, dtype=np.uint8, count=plane, offset=pos).reshape(size, size).copy()
    bad = np.flatnonzero(labels.reshape(-1) >= N_CLASSES)
    if bad.size:
        raise FormatError(f"label value {labels.reshape(-1)[bad[0]]} >= {N_CLASSES}", pos + int(bad[0]))
    pos += plane
    try:
        patch_id = buf[pos:].decode("utf-8")
    except UnicodeDecodeError:
        raise FormatError("patch id is not valid UTF-8", pos) from None
    return n_spec, n_sar, bands, labels, patch_id


def write_patch(sample: PatchSample, path) -> None:
    if sample.sar is None:
        raise ValueError("cannot write a patch without a SAR composite")
    planes = list(sample.spec) + list(sample.sar)
    Path(path).write_bytes(
        _encode(sample.size, planes, N_SPEC_BANDS, N_SAR_BANDS, sample.labels, sample.patch_id)
    )


def read_patch(path) -> PatchSample:
    n_spec, n_sar, bands, labels, patch_id = _decode(Path(path).read_bytes())
    if (n_spec, n_sar) != (N_SPEC_BANDS, N_SAR_BANDS):
        raise FormatError(
            f"expected {N_SPEC_BANDS} spectral + {N_SAR_BANDS} SAR bands, got {n_spec} + {n_sar}", 10
        )
    return PatchSample(bands[:n_spec], bands[n_spec:], labels, patch_id)


def write_label_file(labels: np.ndarray, path, patch_id: str = "") -> None:
    if labels.ndim != 2 or labels.shape[0] != labels.shape[1]:
        raise ValueError(f"label plane must be square, got {labels.shape}")
    Path(path).write_bytes(_encode(labels.shape[0], [], 0, 0, labels, patch_id))


def read_label_file(path) -> tuple[np.ndarray, str]:
    _, _, _, labels, patch_id = _decode(Path(path).read_bytes())
    return labels, patch_id


def write_manifest(paths, manifest_path) -> None:
    manifest_path = Path(manifest_path)
    root = manifest_path.parent
    lines = [Path(os.path.relpath(p, root)).as_posix() for p in paths]
    manifest_path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def read_manifest(manifest_path) -> list[Path]:
    manifest_path = Path(manifest_path)
    text = manifest_path.read_text(encoding="utf-8")
    return [manifest_path.parent / line for line in text.splitlines() if line.strip()]
