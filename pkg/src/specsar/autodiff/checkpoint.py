"""Binary checkpoint format for named parameter arrays.

Layout (all integers little-endian)::

    b"SSFW"  u32 version
    repeated until EOF:
        u32 name_len, name (UTF-8), u8 dtype tag, u32 rank, rank x u64 extents,
        raw little-endian scalars
"""

from __future__ import annotations

import struct
from collections import OrderedDict
from pathlib import Path
from typing import Mapping

import numpy as np

from specsar.errors import FormatError

MAGIC = b"SSFW"
VERSION = 1
DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
TAG_OF = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def encode_checkpoint(state: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in state.items():
        arr = np.asarray(arr)
        if arr.dtype not in TAG_OF:
            raise ValueError(f"{name}: unsupported dtype {arr.dtype}")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BI", TAG_OF[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=DTYPE_TAGS[TAG_OF[arr.dtype]]).tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> "OrderedDict[str, np.ndarray]":
    def take(pos: int, n: int, what: str) -> bytes:
        if pos + n > len(buf):
            raise FormatError(f"truncated checkpoint while reading {what}", pos)
        return buf[pos : pos + n]

    if take(0, 4, "magic") != MAGIC:
        raise FormatError(f"bad magic {buf[:4]!r}, expected {MAGIC!r}", 0)
    (version,) = struct.unpack("<I", take(4, 4, "version"))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", 4)
    pos = 8
    state: OrderedDict[str, np.ndarray] = OrderedDict()
    while pos < len(buf):
        (name_len,) = struct.unpack("<I", take(pos, 4, "name length"))
        pos += 4
        try:
            name = take(pos, name_len, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("parameter name is not valid UTF-8", pos) from None
        pos += name_len
        tag, rank = struct.unpack("<BI", take(pos, 5, "dtype tag and rank"))
        if tag not in DTYPE_TAGS:
            raise FormatError(f"unknown dtype tag {tag}", pos)
        pos += 5
        shape = struct.unpack(f"<{rank}Q", take(pos, 8 * rank, "extents"))
        pos += 8 * rank
        dtype = DTYPE_TAGS[tag]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        raw = take(pos, nbytes, f"data of {name!r}")
        pos += nbytes
        state[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return state


def save_checkpoint(path, state: Mapping[str, np.ndarray]) -> None:
    Path(path).write_bytes(encode_checkpoint(state))


def load_checkpoint(path) -> "OrderedDict[str, np.ndarray]":
    return decode_checkpoint(Path(path).read_bytes())
