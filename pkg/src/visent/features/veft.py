"""VEFT: a bit-exact binary container for named float32 tensors.

Layout, all integers little-endian:

    magic   4 bytes  b"VEFT"
    version u16      currently 1
    count   u32      number of tensors
    then per tensor:
        name_len u16, name UTF-8 bytes
        rank     u8
        dims     rank x u64
        payload  row-major float32, prod(dims) * 4 bytes
        crc32    u32, CRC-32 of the payload bytes

The format is deliberately simple enough to reimplement from this comment
in any language and verify byte for byte.
"""

from __future__ import annotations

import struct
import zlib
from collections import OrderedDict
from typing import Dict

import numpy as np

from ..errors import CorruptionError, FormatError

MAGIC = b"VEFT"
VERSION = 1

_HEADER = struct.Struct("<4sHI")
_NAME_LEN = struct.Struct("<H")
_RANK = struct.Struct("<B")
_DIM = struct.Struct("<Q")
_CRC = struct.Struct("<I")


def veft_dumps(tensors: Dict[str, np.ndarray]) -> bytes:
    """Serialize name -> float32 array, preserving mapping order."""
    names = list(tensors)
    if len(set(names)) != len(names):
        raise FormatError("tensor names must be unique")
    parts = [_HEADER.pack(MAGIC, VERSION, len(names))]
    for name in names:
        arr = tensors[name]
        if not isinstance(arr, np.ndarray) or arr.dtype != np.float32:
            raise FormatError(
                f"tensor {name!r} must be a float32 array, got "
                f"{getattr(arr, 'dtype', type(arr).__name__)}")
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise FormatError(f"tensor name too long ({len(encoded)} bytes)")
        if arr.ndim > 0xFF:
            raise FormatError(f"tensor {name!r} rank {arr.ndim} exceeds 255")
        parts.append(_NAME_LEN.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_RANK.pack(arr.ndim))
        for dim in arr.shape:
            parts.append(_DIM.pack(dim))
        payload = np.ascontiguousarray(arr).astype("<f4", copy=False).tobytes()
        parts.append(payload)
        parts.append(_CRC.pack(zlib.crc32(payload) & 0xFFFFFFFF))
    return b"".join(parts)


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.offset = 0

    def take(self, n: int, what: str) -> bytes:
        end = self.offset + n
        if end > len(self.blob):
            raise CorruptionError(
                f"container truncated at byte {len(self.blob)}: needed {n} "
                f"bytes for {what} starting at byte {self.offset}")
        chunk = self.blob[self.offset:end]
        self.offset = end
        return chunk


def veft_loads(blob: bytes) -> "OrderedDict[str, np.ndarray]":
    """Parse container bytes; inverse of veft_dumps."""
    r = _Reader(blob)
    magic, version, count = _HEADER.unpack(r.take(_HEADER.size, "header"))
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}; not a VEFT container")
    if version != VERSION:
        raise FormatError(
            f"unsupported VEFT version {version} (reader supports {VERSION})")
    out: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for i in range(count):
        (name_len,) = _NAME_LEN.unpack(r.take(_NAME_LEN.size,
                                              f"name length of tensor {i}"))
        try:
            name = r.take(name_len, f"name of tensor {i}").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"tensor {i} name is not valid UTF-8") from None
        if name in out:
            raise FormatError(f"duplicate tensor name {name!r}")
        (rank,) = _RANK.unpack(r.take(_RANK.size, f"rank of {name!r}"))
        dims = []
        for d in range(rank):
            (dim,) = _DIM.unpack(r.take(_DIM.size, f"dim {d} of {name!r}"))
            dims.append(dim)
        n_elems = 1
        for dim in dims:
            n_elems *= dim
        payload = r.take(n_elems * 4, f"payload of {name!r}")
        (crc,) = _CRC.unpack(r.take(_CRC.size, f"checksum of {name!r}"))
        actual = zlib.crc32(payload) & 0xFFFFFFFF
        if crc != actual:
            raise CorruptionError(
                f"checksum mismatch for tensor {name!r}: stored {crc:#010x}, "
                f"computed {actual:#010x}")
        arr = np.frombuffer(payload, dtype="<f4").astype(np.float32)
        out[name] = arr.reshape(dims)
    if r.offset != len(blob):
        raise FormatError(
            f"{len(blob) - r.offset} trailing bytes after the last tensor")
    return out


def write_veft(tensors: Dict[str, np.ndarray], path) -> None:
    with open(path, "wb") as fh:
        fh.write(veft_dumps(tensors))


def read_veft(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        return veft_loads(fh.read())
