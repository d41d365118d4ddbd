"""
The binary checkpoint format.

Layout, all integers little-endian u32: the magic bytes ``JGCK``, the format version, the tensor
count, then per tensor its name length, UTF-8 name, rank, dims and the float32 data (little-endian,
row-major).
"""
import struct
from hashlib import sha1
from pathlib import Path
from typing import Dict, Union

import numpy as np

from . import exceptions

MAGIC = b"JGCK"
VERSION = 1
_U32 = struct.Struct("<I")


def to_bytes(tensors: Dict[str, np.ndarray]) -> bytes:
    """Serialize tensors in insertion order."""
    parts = [MAGIC, _U32.pack(VERSION), _U32.pack(len(tensors))]
    for name, value in tensors.items():
        encoded = name.encode("UTF-8")
        array = np.asarray(value, dtype="<f4")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(array.ndim))
        parts.extend(_U32.pack(d) for d in array.shape)
        parts.append(np.ascontiguousarray(array).tobytes())
    return b"".join(parts)


class _Reader:

    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise exceptions.CheckpointError(f"truncated at byte {self.offset}, wanted {n} more")
        chunk = self.data[self.offset:self.offset + n]
        self.offset += n
        return chunk

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def from_bytes(data: bytes) -> Dict[str, np.ndarray]:
    """
    Parse a checkpoint.

    :raises exceptions.CheckpointError: on a bad magic, an unknown version, truncation or trailing bytes.
    """
    r = _Reader(data)
    magic = r.take(4)
    if magic != MAGIC:
        raise exceptions.CheckpointError(f"bad magic {magic!r}")
    version = r.u32()
    if version != VERSION:
        raise exceptions.CheckpointError(f"unsupported version {version}")
    tensors = {}
    for _ in range(r.u32()):
        try:
            name = r.take(r.u32()).decode("UTF-8")
        except UnicodeDecodeError:
            raise exceptions.CheckpointError(f"tensor name at byte {r.offset} is not UTF-8")
        shape = tuple(r.u32() for _ in range(r.u32()))
        count = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(np.float32)
    if r.offset != len(data):
        raise exceptions.CheckpointError(f"{len(data) - r.offset} trailing bytes")
    return tensors


def save(path: Union[str, Path], tensors: Dict[str, np.ndarray]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(to_bytes(tensors))


def load(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as e:
        raise exceptions.CheckpointError(f"cannot read {path}: {e.strerror}")
    return from_bytes(data)


def checksum(tensors: Dict[str, np.ndarray], prefix: str = "") -> str:
    """sha1 over the names, shapes and float32 bytes of every tensor whose name starts with ``prefix``."""
    h = sha1()
    for name in sorted(n for n in tensors if n.startswith(prefix)):
        array = np.ascontiguousarray(np.asarray(tensors[name], dtype="<f4"))
        h.update(name.encode("UTF-8"))
        h.update(repr(array.shape).encode())
        h.update(array.tobytes())
    return h.hexdigest()
