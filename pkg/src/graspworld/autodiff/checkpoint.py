"""Flat binary checkpoint format for named float64 tensors.

Layout (all integers little-endian):

    magic   4 bytes  b"GWTD"
    version u32      currently 1
    count   u32      number of tensors
    then per tensor, in insertion order:
        name_len u32, name utf-8 bytes
        rank     u32
        extents  u64 * rank
        payload  float64 little-endian, C order

The same byte stream feeds :func:`checksum`, so equality of checksums is
equality of (names, shapes, values).
"""

from __future__ import annotations

import hashlib
import io
import struct
from collections import OrderedDict
from typing import Mapping, Union

import numpy as np

from .tensor import Tensor

MAGIC = b"GWTD"
VERSION = 1

ArrayMap = "OrderedDict[str, np.ndarray]"


def _coerce(value: Union[Tensor, np.ndarray]) -> np.ndarray:
    arr = value.data if isinstance(value, Tensor) else np.asarray(value)
    return np.ascontiguousarray(arr, dtype=np.float64)


def serialize(tensors: Mapping[str, Union[Tensor, np.ndarray]]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(tensors)))
    for name, value in tensors.items():
        arr = _coerce(value)
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.astype("<f8").tobytes(order="C"))
    return buf.getvalue()


def deserialize(blob: bytes) -> "OrderedDict[str, np.ndarray]":
    buf = io.BytesIO(blob)
    if buf.read(4) != MAGIC:
        raise ValueError("not a graspworld checkpoint (bad magic)")
    version, count = struct.unpack("<II", buf.read(8))
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    out: OrderedDict[str, np.ndarray] = OrderedDict()
    for _ in range(count):
        (name_len,) = struct.unpack("<I", buf.read(4))
        name = buf.read(name_len).decode("utf-8")
        (rank,) = struct.unpack("<I", buf.read(4))
        shape = struct.unpack(f"<{rank}Q", buf.read(8 * rank)) if rank else ()
        n = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(buf.read(8 * n), dtype="<f8").reshape(shape)
        out[name] = np.array(arr, dtype=np.float64)
    return out


def save(path, tensors: Mapping[str, Union[Tensor, np.ndarray]]) -> None:
    with open(path, "wb") as fh:
        fh.write(serialize(tensors))


def load(path) -> "OrderedDict[str, np.ndarray]":
    with open(path, "rb") as fh:
        return deserialize(fh.read())


def checksum(tensors: Mapping[str, Union[Tensor, np.ndarray]]) -> str:
    """sha256 over the serialized byte stream."""
    return hashlib.sha256(serialize(tensors)).hexdigest()
