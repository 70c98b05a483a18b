"""Binary tensor checkpoints with a JSON config sidecar.

File layout (all integers little-endian):

    magic   4 bytes  b"PCTC"
    version u32
    count   u32      number of tensors
    per tensor:
        name_len u16, name UTF-8 bytes
        ndim     u8,  dims as u64 each
        data     float64 little-endian, row-major

A JSON sidecar at ``<path>.json`` stores the model kind and config (plus, for
estimator checkpoints, the SHA-256 of the tokenizer checkpoint they were
trained against). Tensor order is fixed by the writer, so identical models
produce byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PCTC"
VERSION = 1


class CheckpointError(ValueError):
    """Corrupt checkpoint, shape mismatch, or sidecar inconsistency."""


def sidecar_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def write_checkpoint(path: str | Path, tensors: dict[str, np.ndarray],
                     meta: dict) -> None:
    """Write tensors (in dict order) plus the JSON sidecar."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(tensors))]
    for name, tensor in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(tensor, dtype="<f8")
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        chunks.append(arr.tobytes())
    path.write_bytes(b"".join(chunks))
    sidecar_path(path).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read (tensors, sidecar meta); validates framing, not model shapes."""
    path = Path(path)
    blob = path.read_bytes()
    view = memoryview(blob)
    if len(blob) < 12 or bytes(view[:4]) != MAGIC:
        raise CheckpointError(f"{path}: not a PCTC checkpoint")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    offset = 12
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<H", blob, offset)
            offset += 2
            name = bytes(view[offset:offset + name_len]).decode("utf-8")
            offset += name_len
            (ndim,) = struct.unpack_from("<B", blob, offset)
            offset += 1
            dims = struct.unpack_from(f"<{ndim}Q", blob, offset)
            offset += 8 * ndim
            size = int(np.prod(dims, dtype=np.int64)) if ndim else 1
            nbytes = 8 * size
            if offset + nbytes > len(blob):
                raise CheckpointError(f"{path}: truncated tensor {name!r}")
            data = np.frombuffer(view[offset:offset + nbytes], dtype="<f8")
            offset += nbytes
        except struct.error as err:
            raise CheckpointError(f"{path}: truncated checkpoint ({err})")
        tensors[name] = data.reshape(dims).astype(np.float64)
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    meta_file = sidecar_path(path)
    if not meta_file.exists():
        raise CheckpointError(f"{path}: missing sidecar {meta_file.name}")
    meta = json.loads(meta_file.read_text(encoding="utf-8"))
    return tensors, meta


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def expect_shape(tensors: dict[str, np.ndarray], name: str,
                 shape: tuple[int, ...]) -> np.ndarray:
    if name not in tensors:
        raise CheckpointError(f"checkpoint missing tensor {name!r}")
    got = tensors[name]
    if got.shape != shape:
        raise CheckpointError(
            f"tensor {name!r} has shape {got.shape}, config expects {shape}"
        )
    return got
