"""Checkpoint files.

Layout (little-endian)::

    magic      4 bytes  b"HCCK"
    version    uint16   = 1
    reserved   uint16   = 0
    meta_len   uint32
    meta       meta_len bytes of UTF-8 JSON (sorted keys): stage, modality,
               d_model, config, arch, info, and a tensor table
               [{name, shape, dtype, offset, nbytes}, ...]
    payload    concatenated raw tensor bytes in table order
    digest     32-byte SHA-256 over everything above

The digest is the checkpoint's content hash.
"""
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointCorruptError, CheckpointError, CheckpointMismatchError

MAGIC = b"HCCK"
VERSION = 1
_HEAD = struct.Struct("<4sHHI")
_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    stage: object            # 1, 2, 3 or "joint23"
    modality: str            # audio, text or fused
    params: dict             # name -> ndarray, insertion ordered
    config: dict = field(default_factory=dict)
    arch: dict = field(default_factory=dict)
    info: dict = field(default_factory=dict)

    @property
    def d_model(self):
        return self.arch.get("d_model")

    def to_bytes(self):
        table, chunks, offset = [], [], 0
        for name, arr in self.params.items():
            arr = np.asarray(arr)
            dt = _DTYPES.get(arr.dtype.name)
            if dt is None:
                raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
            raw = np.ascontiguousarray(arr, dtype=dt).tobytes()
            table.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.name,
                          "offset": offset, "nbytes": len(raw)})
            chunks.append(raw)
            offset += len(raw)
        meta = {"stage": self.stage, "modality": self.modality, "d_model": self.d_model,
                "config": self.config, "arch": self.arch, "info": self.info, "tensors": table}
        mbytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
        body = _HEAD.pack(MAGIC, VERSION, 0, len(mbytes)) + mbytes + b"".join(chunks)
        return body + hashlib.sha256(body).digest()

    @property
    def content_hash(self):
        return self.to_bytes()[-32:].hex()

    @classmethod
    def from_bytes(cls, buf, source="<bytes>"):
        if len(buf) < _HEAD.size + 32:
            raise CheckpointCorruptError(f"{source}: file too short to be a checkpoint")
        body, digest = buf[:-32], buf[-32:]
        magic, version, _, mlen = _HEAD.unpack_from(body)
        if magic != MAGIC:
            raise CheckpointCorruptError(f"{source}: bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointError(f"{source}: unsupported checkpoint version {version}")
        if hashlib.sha256(body).digest() != digest:
            raise CheckpointCorruptError(f"{source}: content hash mismatch, file is corrupt")
        try:
            meta = json.loads(body[_HEAD.size:_HEAD.size + mlen])
        except ValueError:
            raise CheckpointCorruptError(f"{source}: unreadable metadata") from None
        payload = body[_HEAD.size + mlen:]
        params = {}
        for t in meta["tensors"]:
            raw = payload[t["offset"]:t["offset"] + t["nbytes"]]
            params[t["name"]] = np.frombuffer(raw, dtype=_DTYPES[t["dtype"]]).reshape(t["shape"]).astype(t["dtype"])
        return cls(meta["stage"], meta["modality"], params, meta["config"], meta["arch"], meta["info"])


def save_checkpoint(ckpt, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(ckpt.to_bytes())
    return path


def load_checkpoint(path, stage=None, modality=None, d_model=None):
    """Read and verify a checkpoint; optionally require stage/modality/d_model."""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"no checkpoint at {path}")
    ckpt = Checkpoint.from_bytes(path.read_bytes(), str(path))
    if stage is not None and ckpt.stage != stage:
        raise CheckpointMismatchError(f"{path}: stage {ckpt.stage!r} checkpoint, expected stage {stage!r}")
    if modality is not None and ckpt.modality != modality:
        raise CheckpointMismatchError(f"{path}: {ckpt.modality} checkpoint, expected {modality}")
    if d_model is not None and ckpt.d_model != d_model:
        raise CheckpointMismatchError(f"{path}: d_model {ckpt.d_model}, expected {d_model}")
    return ckpt


def file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
