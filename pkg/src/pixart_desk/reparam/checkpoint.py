"""Bit-exact binary checkpoint container.

Layout (all integers little-endian, every section padded to 8 bytes)::

    magic            8 bytes   b"PXCKPT\\x00\\x00"
    format_version   u32, reserved u32
    config           u64 length + UTF-8 JSON
    metadata         u64 length + UTF-8 JSON (string -> string)
    entry count      u64
    name table       per entry: u32 name length, name, u32 ndim,
                     u64 dims[ndim], u64 element count
    arrays           float64 little-endian, in name-table order
    checksum         u64, BLAKE2b-64 of every preceding byte
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from filelock import FileLock

from ..errors import PixArtError
from ..model.config import ModelConfig
from ..model.params import NAME_RE

MAGIC = b"PXCKPT\x00\x00"
FORMAT_VERSION = 1
OPTIMIZER_MODULES = ("adamw_m", "adamw_v")


class CheckpointError(PixArtError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class CheckpointTruncatedError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    pass


class CheckpointChecksumError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    weights: "OrderedDict[str, np.ndarray]"
    metadata: dict[str, str] = field(default_factory=dict)
    optimizer: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        self.weights = OrderedDict((k, np.asarray(v, dtype=np.float64)) for k, v in self.weights.items())
        self.optimizer = OrderedDict((k, np.asarray(v, dtype=np.float64)) for k, v in self.optimizer.items())
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}
        for name in list(self.weights) + list(self.optimizer):
            if not NAME_RE.match(name):
                raise CheckpointError(f"weight name {name!r} violates <module>.<index>.<role>")


def _pad(buf: bytearray) -> None:
    buf.extend(b"\x00" * (-len(buf) % 8))


def _blob(buf: bytearray, payload: bytes) -> None:
    buf.extend(struct.pack("<Q", len(payload)))
    buf.extend(payload)
    _pad(buf)


def to_bytes(ckpt: Checkpoint) -> bytes:
    buf = bytearray(MAGIC)
    buf.extend(struct.pack("<II", ckpt.format_version, 0))
    _blob(buf, json.dumps(ckpt.config.to_dict(), sort_keys=True).encode("utf-8"))
    _blob(buf, json.dumps(ckpt.metadata, sort_keys=True).encode("utf-8"))
    entries = list(ckpt.weights.items()) + list(ckpt.optimizer.items())
    buf.extend(struct.pack("<Q", len(entries)))
    for name, arr in entries:
        raw = name.encode("utf-8")
        buf.extend(struct.pack("<I", len(raw)))
        buf.extend(raw)
        buf.extend(struct.pack("<I", arr.ndim))
        buf.extend(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.extend(struct.pack("<Q", arr.size))
        _pad(buf)
    for _, arr in entries:
        buf.extend(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    buf.extend(hashlib.blake2b(bytes(buf), digest_size=8).digest())
    return bytes(buf)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"checkpoint truncated: need {n} bytes at offset {self.pos}, file has {len(self.data)}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def align(self) -> None:
        self.take(-self.pos % 8)

    def blob(self) -> bytes:
        (n,) = self.unpack("<Q")
        out = self.take(n)
        self.align()
        return out


def from_bytes(data: bytes) -> Checkpoint:
    r = _Reader(data)
    if r.take(8) != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, _ = r.unpack("<II")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version} unsupported (expected {FORMAT_VERSION})")
    config = ModelConfig.from_dict(json.loads(r.blob().decode("utf-8")))
    metadata = json.loads(r.blob().decode("utf-8"))
    (count,) = r.unpack("<Q")
    table = []
    for _ in range(count):
        (nlen,) = r.unpack("<I")
        name = r.take(nlen).decode("utf-8")
        (ndim,) = r.unpack("<I")
        shape = r.unpack(f"<{ndim}Q")
        (length,) = r.unpack("<Q")
        r.align()
        if int(np.prod(shape)) != length:
            raise CheckpointShapeError(
                f"{name}: declared shape {tuple(shape)} disagrees with stored length {length}")
        table.append((name, tuple(shape), length))
    arrays = OrderedDict()
    for name, shape, length in table:
        arrays[name] = np.frombuffer(r.take(8 * length), dtype="<f8").astype(np.float64).reshape(shape)
    body_end = r.pos
    (stored,) = r.unpack("<Q")
    if r.pos != len(data):
        raise CheckpointShapeError(
            f"checkpoint has {len(data) - r.pos} trailing bytes beyond the declared arrays")
    if struct.unpack("<Q", hashlib.blake2b(data[:body_end], digest_size=8).digest())[0] != stored:
        raise CheckpointChecksumError("checkpoint checksum mismatch")
    weights = OrderedDict((k, v) for k, v in arrays.items() if k.split(".", 1)[0] not in OPTIMIZER_MODULES)
    optim = OrderedDict((k, v) for k, v in arrays.items() if k.split(".", 1)[0] in OPTIMIZER_MODULES)
    return Checkpoint(config, weights, metadata, optim, version)


def save(ckpt: Checkpoint, path) -> None:
    path = os.fspath(path)
    payload = to_bytes(ckpt)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with FileLock(path + ".lock"):
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


def load(path) -> Checkpoint:
    path = os.fspath(path)
    with FileLock(path + ".lock"):
        with open(path, "rb") as fh:
            data = fh.read()
    return from_bytes(data)
