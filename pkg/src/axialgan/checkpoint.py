"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"AXGN" | u32 version | u32 n | config text (utf-8, n bytes) | u64 data seed
    u32 count | count x entry | u32 crc32 of everything before it

    entry = u16 name length | name (utf-8) | u8 ndim | ndim x u32 dims | f32 payload

Reading parses and verifies the whole file before anything is handed back,
so a damaged file never half-loads a model.
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, IntegrityError

MAGIC = b"AXGN"
VERSION = 1


@dataclass
class CheckpointData:
    config_text: str = ""
    data_seed: int = 0
    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = VERSION


def encode(ckpt: CheckpointData) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    cfg = ckpt.config_text.encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg, struct.pack("<Q", ckpt.data_seed & (2**64 - 1))]
    parts.append(struct.pack("<I", len(ckpt.tensors)))
    for name, arr in ckpt.tensors.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        key = name.encode("utf-8")
        parts += [struct.pack("<H", len(key)), key, struct.pack("<B", arr.ndim)]
        parts += [struct.pack(f"<{arr.ndim}I", *arr.shape), arr.tobytes()]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise IntegrityError("checkpoint is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(buf: bytes) -> CheckpointData:
    if len(buf) < 8 or buf[:4] != MAGIC:
        raise FormatError("not an AXGN checkpoint (bad magic)")
    (version,) = struct.unpack("<I", buf[4:8])
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    if len(buf) < 12:
        raise IntegrityError("checkpoint is truncated")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    r = _Reader(body)
    r.take(8)
    (n,) = r.unpack("<I")
    config_text = r.take(n).decode("utf-8")
    (seed,) = r.unpack("<Q")
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (klen,) = r.unpack("<H")
        name = r.take(klen).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        size = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(body) or zlib.crc32(body) != crc:
        raise IntegrityError("checkpoint checksum mismatch (truncated or corrupted)")
    return CheckpointData(config_text, seed, tensors, version)


def write_checkpoint(path, ckpt: CheckpointData) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(ckpt))
    tmp.replace(path)


def read_checkpoint(path) -> CheckpointData:
    return decode(Path(path).read_bytes())


def read_tensor_table(path) -> dict[str, np.ndarray]:
    return read_checkpoint(path).tensors


def write_tensor_table(path, tensors: dict[str, np.ndarray], config_text: str = "", data_seed: int = 0) -> None:
    write_checkpoint(path, CheckpointData(config_text, data_seed, dict(tensors)))


def subtable(tensors: dict[str, np.ndarray], prefix: str) -> dict[str, np.ndarray]:
    p = prefix + "/"
    return {k[len(p):]: v for k, v in tensors.items() if k.startswith(p)}


def prefixed(prefix: str, table: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {f"{prefix}/{k}": v for k, v in table.items()}


__all__ = ["MAGIC", "VERSION", "CheckpointData", "encode", "decode", "write_checkpoint", "read_checkpoint",
           "read_tensor_table", "write_tensor_table", "subtable", "prefixed"]
