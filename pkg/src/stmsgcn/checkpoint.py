"""Binary checkpoint of named parameter arrays.

Layout::

    b"STMS" | version (1 byte) | record count (u32 LE)
    records: u32 LE byte length + UTF-8 JSON, one per record
        record 0: {"config": {...}, "step": int, "payload_bytes": int, "crc32": int}
        record i>0: {"name", "shape", "dtype", "offset", "nbytes"}
    payload: parameters concatenated as little-endian arrays, in manifest order
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np
import torch

from .model import ModelConfig, StmsModel

MAGIC = b"STMS"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointIntegrityError(CheckpointError):
    pass


class CheckpointMismatchError(CheckpointError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    name: str
    shape: tuple[int, ...]
    dtype: str
    offset: int
    nbytes: int


@dataclass
class Checkpoint:
    manifest: list[ManifestEntry]
    payload: bytes
    config: dict
    step: int = 0

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig(**self.config["model"])

    def array(self, name: str) -> np.ndarray:
        entry = next((e for e in self.manifest if e.name == name), None)
        if entry is None:
            raise KeyError(name)
        raw = self.payload[entry.offset:entry.offset + entry.nbytes]
        return np.frombuffer(raw, dtype=np.dtype(entry.dtype)).reshape(entry.shape)

    def to_bytes(self) -> bytes:
        header = {
            "config": self.config,
            "step": self.step,
            "payload_bytes": len(self.payload),
            "crc32": zlib.crc32(self.payload),
        }
        records = [header] + [
            {"name": e.name, "shape": list(e.shape), "dtype": e.dtype, "offset": e.offset, "nbytes": e.nbytes}
            for e in self.manifest
        ]
        parts = [MAGIC, bytes([VERSION]), struct.pack("<I", len(records))]
        for rec in records:
            blob = json.dumps(rec, sort_keys=True, separators=(",", ":")).encode("utf-8")
            parts += [struct.pack("<I", len(blob)), blob]
        parts.append(self.payload)
        return b"".join(parts)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if data[:4] != MAGIC:
            raise CheckpointIntegrityError("not a checkpoint file (bad magic)")
        if len(data) < 9:
            raise CheckpointIntegrityError("truncated checkpoint header")
        if data[4] != VERSION:
            raise CheckpointError(f"unsupported checkpoint version {data[4]}")
        (count,) = struct.unpack_from("<I", data, 5)
        pos = 9
        records = []
        for _ in range(count):
            if pos + 4 > len(data):
                raise CheckpointIntegrityError("truncated manifest")
            (n,) = struct.unpack_from("<I", data, pos)
            pos += 4
            if pos + n > len(data):
                raise CheckpointIntegrityError("truncated manifest")
            try:
                records.append(json.loads(data[pos:pos + n].decode("utf-8")))
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise CheckpointIntegrityError(f"corrupt manifest record: {exc}") from None
            pos += n
        if not records:
            raise CheckpointIntegrityError("empty manifest")
        header, entries = records[0], records[1:]
        payload = data[pos:]
        if len(payload) != header["payload_bytes"]:
            raise CheckpointIntegrityError(
                f"payload is {len(payload)} bytes, manifest declares {header['payload_bytes']}"
            )
        if zlib.crc32(payload) != header["crc32"]:
            raise CheckpointIntegrityError("payload checksum mismatch")
        manifest = [
            ManifestEntry(e["name"], tuple(e["shape"]), e["dtype"], e["offset"], e["nbytes"]) for e in entries
        ]
        expected = 0
        for e in manifest:
            if e.offset != expected:
                raise CheckpointIntegrityError(f"parameter {e.name}: non-contiguous offset {e.offset}")
            expected += e.nbytes
        if expected != len(payload):
            raise CheckpointIntegrityError("manifest does not cover the payload")
        return cls(manifest, payload, header["config"], header["step"])


def checkpoint_from_model(model: StmsModel, step: int = 0, train_config: dict | None = None) -> Checkpoint:
    manifest, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        arr = p.detach().cpu().numpy()
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        manifest.append(ManifestEntry(name, tuple(arr.shape), arr.dtype.str, offset, len(raw)))
        chunks.append(raw)
        offset += len(raw)
    config = {"model": model.config.to_dict()}
    if train_config is not None:
        config["train"] = train_config
    return Checkpoint(manifest, b"".join(chunks), config, step)


def model_from_checkpoint(ckpt: Checkpoint, config: ModelConfig | None = None) -> StmsModel:
    """Rebuild a model; ``config`` (if given) must match the stored parameters."""
    cfg = config or ckpt.model_config
    dtypes = {np.dtype(e.dtype) for e in ckpt.manifest}
    if len(dtypes) != 1:
        raise CheckpointError(f"mixed parameter dtypes {dtypes}")
    dtype = torch.float64 if dtypes.pop() == np.float64 else torch.float32
    model = StmsModel(cfg, dtype=dtype)
    params = dict(model.named_parameters())
    stored = {e.name: e for e in ckpt.manifest}
    for name, p in params.items():
        if name not in stored:
            raise CheckpointMismatchError(f"parameter {name} missing from checkpoint")
        if tuple(p.shape) != stored[name].shape:
            raise CheckpointMismatchError(
                f"parameter {name}: checkpoint shape {stored[name].shape}, model expects {tuple(p.shape)}"
            )
    extra = set(stored) - set(params)
    if extra:
        raise CheckpointMismatchError(f"unexpected parameters in checkpoint: {sorted(extra)}")
    with torch.no_grad():
        for name, p in params.items():
            p.copy_(torch.from_numpy(ckpt.array(name).copy()))
    return model


def save_checkpoint(model: StmsModel, path, step: int = 0, train_config: dict | None = None) -> Checkpoint:
    ckpt = checkpoint_from_model(model, step, train_config)
    with open(path, "wb") as fh:
        fh.write(ckpt.to_bytes())
    return ckpt


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return Checkpoint.from_bytes(fh.read())


def load_checkpoint(path, config: ModelConfig | None = None) -> StmsModel:
    return model_from_checkpoint(read_checkpoint(path), config)
