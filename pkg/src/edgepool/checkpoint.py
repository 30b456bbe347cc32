"""Binary checkpoint format.

Layout (all integers little-endian)::

    0   magic  b"EDGEPOOL"                      8 bytes
    8   format version                           u32
    12  number of manifest records               u32
    16  training step                            u64
    24  sha256 of the model spec (raw digest)    32 bytes
    56  spec JSON length, then UTF-8 spec JSON   u32 + bytes
        manifest records, in parameter order:
            name length u16, UTF-8 name, rank u8, dims u32 * rank, offset u64
        zero padding to the next multiple of 8
        blob length u64
        blob: float32 values, tensors packed back to back
        crc32 of every preceding byte            u32

Record offsets are byte offsets into the blob; the blob itself starts on an
8-byte boundary.
"""

from __future__ import annotations

import hashlib
import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import build_model, spec_from_dict

__all__ = ["CheckpointError", "Checkpoint", "MAGIC", "VERSION", "save_checkpoint", "read_checkpoint",
           "load_checkpoint", "load_params_into"]

MAGIC = b"EDGEPOOL"
VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    spec: dict
    spec_hash: str
    step: int
    manifest: list[tuple[str, tuple[int, ...], int]]  # (name, shape, byte offset)
    params: dict[str, np.ndarray]  # float32


def _spec_digest(spec: dict) -> bytes:
    return hashlib.sha256(json.dumps(spec, sort_keys=True, separators=(",", ":")).encode()).digest()


def save_checkpoint(model, path, step: int = 0, params: dict[str, np.ndarray] | None = None) -> Path:
    """Write ``model`` (or ``params`` with the model's spec) to ``path``."""
    path = Path(path)
    spec = model.spec.to_dict()
    if params is None:
        params = {name: p.data for name, p in model.params.items()}
    spec_json = json.dumps(spec, sort_keys=True, separators=(",", ":")).encode()

    head = bytearray()
    head += MAGIC
    head += struct.pack("<IIQ", VERSION, len(params), step)
    head += _spec_digest(spec)
    head += struct.pack("<I", len(spec_json)) + spec_json
    offset = 0
    chunks = []
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw = name.encode()
        head += struct.pack("<H", len(raw)) + raw
        head += struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape)
        head += struct.pack("<Q", offset)
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    head += b"\0" * (-len(head) % 8)
    head += struct.pack("<Q", offset)
    body = bytes(head) + b"".join(chunks)
    path.write_bytes(body + struct.pack("<I", zlib.crc32(body)))
    return path


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"checkpoint truncated while reading {what} at byte {self.pos}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def read_checkpoint(path) -> Checkpoint:
    buf = Path(path).read_bytes()
    if len(buf) < 16 or buf[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    version = struct.unpack("<I", buf[8:12])[0]
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, this build reads version {VERSION}")
    if len(buf) < 20:
        raise CheckpointError(f"{path}: checkpoint truncated")
    body, (crc,) = buf[:-4], struct.unpack("<I", buf[-4:])
    if zlib.crc32(body) != crc:
        raise CheckpointError(f"{path}: checksum mismatch (file corrupted or truncated)")

    r = _Reader(body)
    r.take(12, "header")
    n_records, step = r.unpack("<IQ", "header")
    digest = r.take(32, "spec hash")
    (spec_len,) = r.unpack("<I", "spec length")
    spec = json.loads(r.take(spec_len, "spec").decode())
    if _spec_digest(spec) != digest:
        raise CheckpointError(f"{path}: stored spec does not match its hash")
    manifest = []
    for _ in range(n_records):
        (name_len,) = r.unpack("<H", "record name length")
        name = r.take(name_len, "record name").decode()
        (rank,) = r.unpack("<B", f"rank of {name}")
        dims = r.unpack(f"<{rank}I", f"dims of {name}")
        (offset,) = r.unpack("<Q", f"offset of {name}")
        manifest.append((name, tuple(dims), offset))
    r.take(-r.pos % 8, "padding")
    (blob_len,) = r.unpack("<Q", "blob length")
    blob = r.take(blob_len, "blob")
    if r.pos != len(body):
        raise CheckpointError(f"{path}: {len(body) - r.pos} unexpected trailing bytes")
    expected = 4 * sum(int(np.prod(shape)) for _, shape, _ in manifest)
    if blob_len != expected:
        raise CheckpointError(f"{path}: blob is {blob_len} bytes, manifest needs {expected}")

    params = {}
    for name, shape, offset in manifest:
        count = int(np.prod(shape))
        if offset + 4 * count > blob_len:
            raise CheckpointError(f"{path}: tensor {name} runs past the end of the blob")
        params[name] = np.frombuffer(blob, dtype="<f4", count=count, offset=offset).reshape(shape).copy()
    return Checkpoint(spec, digest.hex(), step, manifest, params)


def load_params_into(model, params: dict[str, np.ndarray]) -> None:
    """Copy ``params`` into ``model`` by name; every model parameter must be present with its shape."""
    missing = [n for n in model.params if n not in params]
    extra = [n for n in params if n not in model.params]
    if missing or extra:
        raise CheckpointError(f"parameter names differ: missing {missing}, unexpected {extra}")
    for name, p in model.params.items():
        if params[name].shape != p.shape:
            raise CheckpointError(f"{name}: checkpoint shape {params[name].shape}, model expects {p.shape}")
        p.data[...] = params[name]


def load_checkpoint(path, dtype=np.float32, expect_hash: str | None = None):
    """Rebuild the model stored at ``path``.  Returns (model, checkpoint)."""
    ckpt = read_checkpoint(path)
    if expect_hash is not None and expect_hash != ckpt.spec_hash:
        raise CheckpointError(f"{path}: model spec hash {ckpt.spec_hash[:12]} does not match expected "
                              f"{expect_hash[:12]}")
    model = build_model(spec_from_dict(ckpt.spec), seed=0, dtype=dtype)
    load_params_into(model, ckpt.params)
    return model, ckpt
