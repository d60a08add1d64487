"""Binary checkpoint container.

Layout (all integers little-endian)::

    b"SGENCKPT"                      8-byte magic
    uint32 version
    uint32 n, n bytes                UTF-8 JSON metadata
    per tensor (count in metadata["tensors"]):
        uint32 n, n bytes            UTF-8 name
        uint32 rank
        uint64 * rank                extents
        float64 * prod(extents)      row-major payload
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import NormRecord
from .discriminator import DiscriminatorConfig, DiscriminatorModel
from .errors import FormatError, UnsupportedVersionError
from .generator import GeneratorConfig, GeneratorModel

MAGIC = b"SGENCKPT"
VERSION = 1
KINDS = ("generator", "discriminator")


@dataclass
class Checkpoint:
    kind: str
    params: dict[str, np.ndarray]
    model_config: dict
    norm: NormRecord | None = None
    train_config: dict | None = None
    history: dict = field(default_factory=dict)

    @classmethod
    def from_model(cls, model, norm=None, train_config=None, history=None) -> "Checkpoint":
        kind = "generator" if isinstance(model, GeneratorModel) else "discriminator"
        return cls(
            kind=kind,
            params={k: t.values.copy() for k, t in model.parameters().items()},
            model_config=model.config.to_dict(),
            norm=norm,
            train_config=train_config,
            history=dict(history or {}),
        )

    def to_model(self):
        """Rebuild the model and load the stored tensors into it."""
        if self.kind == "generator":
            model = GeneratorModel.zeros(GeneratorConfig(**self.model_config))
        elif self.kind == "discriminator":
            model = DiscriminatorModel.zeros(DiscriminatorConfig(**self.model_config))
        else:
            raise FormatError(f"unknown model kind {self.kind!r}")
        params = model.parameters()
        if set(params) != set(self.params):
            missing = sorted(set(params) ^ set(self.params))
            raise FormatError(f"checkpoint tensors do not match a {self.kind} model: {missing}")
        for name, t in params.items():
            arr = self.params[name]
            if arr.shape != t.shape:
                raise FormatError(f"tensor {name} has shape {arr.shape}, model expects {t.shape}")
            t.values = arr.copy()
        return model


def encode(ckpt: Checkpoint) -> bytes:
    meta = {
        "kind": ckpt.kind,
        "model_config": ckpt.model_config,
        "normalization": ckpt.norm.to_dict() if ckpt.norm else None,
        "train_config": ckpt.train_config,
        "history": ckpt.history,
        "tensors": len(ckpt.params),
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta_bytes)), meta_bytes]
    for name in sorted(ckpt.params):
        arr = np.ascontiguousarray(ckpt.params[name], dtype="<f8")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)) + nb)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated checkpoint while reading {what}", self.pos)
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def decode(buf: bytes) -> Checkpoint:
    r = _Reader(buf)
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError("bad magic, not a sensegen checkpoint", 0)
    version = r.u32("version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version} (expected {VERSION})", 8)
    n_meta = r.u32("metadata length")
    at = r.pos
    try:
        meta = json.loads(r.take(n_meta, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt metadata: {exc}", at) from None
    params = {}
    for _ in range(int(meta.get("tensors", 0))):
        at = r.pos
        try:
            name = r.take(r.u32("name length"), "tensor name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("corrupt tensor name", at) from None
        rank = r.u32("rank")
        shape = struct.unpack(f"<{rank}Q", r.take(8 * rank, "extents"))
        count = int(np.prod(shape, dtype=np.int64))
        payload = r.take(8 * count, f"payload of {name}")
        params[name] = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after last tensor", r.pos)
    norm = NormRecord.from_dict(meta["normalization"]) if meta.get("normalization") else None
    return Checkpoint(
        kind=meta["kind"],
        params=params,
        model_config=meta["model_config"],
        norm=norm,
        train_config=meta.get("train_config"),
        history=meta.get("history") or {},
    )


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Write atomically: a failed save never leaves a partial file at ``path``."""
    path = Path(path)
    data = encode(ckpt)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    return decode(Path(path).read_bytes())
