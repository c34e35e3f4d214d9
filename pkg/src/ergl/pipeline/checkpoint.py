"""Binary checkpoint format.

Layout (little-endian)::

    b"ERGLCKP1"            magic
    u32                    format version
    u32 + bytes            JSON metadata block (config, event ids/names, scenes, ...)
    u32                    tensor count
    per tensor: u16 name length, UTF-8 name, u8 ndim, ndim x u32 extents, f32 data
    u32                    CRC32 of everything above
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from ..errors import ChecksumError, InputError, VersionError

MAGIC = b"ERGLCKP1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: Dict[str, Any]
    event_ids: List[int]
    event_names: List[str]
    scene_vocab: List[str]
    params: Dict[str, np.ndarray]
    optimizer: Dict[str, Any] = field(default_factory=dict)  # t + hyper-parameters
    optimizer_moments: Dict[str, np.ndarray] = field(default_factory=dict)  # "m.<name>", "v.<name>"
    best_val_acc: float = 0.0
    best_epoch: int = 0

    def metadata(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "event_ids": self.event_ids,
            "event_names": self.event_names,
            "scene_vocab": self.scene_vocab,
            "optimizer": self.optimizer,
            "best_val_acc": self.best_val_acc,
            "best_epoch": self.best_epoch,
        }


def _pack_tensor(name: str, value: np.ndarray) -> bytes:
    raw = name.encode("utf-8")
    arr = np.ascontiguousarray(value, dtype="<f4")
    head = struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim)
    head += struct.pack(f"<{arr.ndim}I", *arr.shape)
    return head + arr.tobytes()


def dumps(ckpt: Checkpoint, version: int = FORMAT_VERSION) -> bytes:
    meta = json.dumps(ckpt.metadata(), sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = dict(ckpt.params)
    for key, value in ckpt.optimizer_moments.items():
        tensors[f"optim.{key}"] = value
    body = bytearray(MAGIC)
    body += struct.pack("<I", version)
    body += struct.pack("<I", len(meta)) + meta
    body += struct.pack("<I", len(tensors))
    for name in tensors:
        body += _pack_tensor(name, tensors[name])
    body += struct.pack("<I", zlib.crc32(bytes(body)) & 0xFFFFFFFF)
    return bytes(body)


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> None:
    Path(path).write_bytes(dumps(ckpt))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise ChecksumError("checkpoint ends early")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    if len(blob) < 8 and MAGIC.startswith(blob):
        raise ChecksumError(f"{source}: checkpoint truncated")
    if blob[:8] != MAGIC:
        raise InputError(f"{source}: not an ERGL checkpoint (bad magic)")
    if len(blob) < 16:
        raise ChecksumError(f"{source}: checkpoint truncated")
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) & 0xFFFFFFFF != stored_crc:
        raise ChecksumError(f"{source}: checksum mismatch (file corrupt or truncated)")
    reader = _Reader(blob[:-4])
    reader.take(8)
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise VersionError(f"{source}: checkpoint format version {version}, this build reads version {FORMAT_VERSION}")
    (meta_len,) = reader.unpack("<I")
    meta = json.loads(reader.take(meta_len).decode("utf-8"))
    (count,) = reader.unpack("<I")
    params: Dict[str, np.ndarray] = {}
    moments: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (ndim,) = reader.unpack("<B")
        shape = reader.unpack(f"<{ndim}I")
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(reader.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
        if name.startswith("optim."):
            moments[name[len("optim.") :]] = arr
        else:
            params[name] = arr
    return Checkpoint(
        config=meta["config"],
        event_ids=[int(i) for i in meta["event_ids"]],
        event_names=list(meta["event_names"]),
        scene_vocab=list(meta["scene_vocab"]),
        params=params,
        optimizer=meta.get("optimizer", {}),
        optimizer_moments=moments,
        best_val_acc=float(meta["best_val_acc"]),
        best_epoch=int(meta["best_epoch"]),
    )


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return loads(path.read_bytes(), str(path))


def checkpoint_io(ckpt: Checkpoint, path: Union[str, Path]) -> Checkpoint:
    """Save then reload ``ckpt``; returns the reloaded copy."""
    save_checkpoint(path, ckpt)
    return load_checkpoint(path)
