"""Bit-exact checkpoint container.

Layout: 4-byte magic "PTXF", 1-byte version, u32 little-endian header
length, UTF-8 JSON header {config, manifest}, then the raw tensor blobs
concatenated in manifest order. Tensors are little-endian float32, int8 or
int16; integer tensors carry a power-of-two scale exponent.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig

log = logging.getLogger(__name__)

MAGIC = b"PTXF"
VERSION = 1

_DTYPES = {
    "float32": np.dtype("<f4"),
    "int8": np.dtype("i1"),
    "int16": np.dtype("<i2"),
}


class CheckpointError(ValueError):
    pass


@dataclass
class TensorEntry:
    name: str
    array: np.ndarray  # raw stored values (codes for integer tensors)
    dtype: str
    scale_exp: int | None = None  # required for integer tensors

    def values(self) -> np.ndarray:
        """Dequantized float64 view."""
        if self.dtype == "float32":
            return self.array.astype(np.float64)
        return self.array.astype(np.float64) * 2.0**self.scale_exp


def expected_shapes(config: ModelConfig) -> dict:
    d, n = config.embed_dim, config.num_classes
    shapes = {
        "encoder.weight": (d, config.token_dim),
        "encoder.bias": (d,),
        "encoder.gain": (d,),
        "head.weight": (n, d),
    }
    if config.final_norm:
        shapes["final_norm.gain"] = (d,)
    for i in range(config.layers):
        p = f"layers.{i}"
        shapes[f"{p}.attn.gain"] = (d,)
        shapes[f"{p}.attn.wq"] = (d, d)
        shapes[f"{p}.attn.wk"] = (d, d)
        shapes[f"{p}.attn.wv"] = (d, d)
        shapes[f"{p}.attn.wo"] = (d, d)
        shapes[f"{p}.attn.bo"] = (d,)
        shapes[f"{p}.mlp.gain"] = (d,)
        shapes[f"{p}.mlp.w1"] = (4 * d, d)
        shapes[f"{p}.mlp.w2"] = (d, 4 * d)
        shapes[f"{p}.mlp.b2"] = (d,)
    return shapes


def save_checkpoint(path, config: ModelConfig, tensors: dict):
    """`tensors` maps name -> TensorEntry or plain float array."""
    shapes = expected_shapes(config)
    entries = []
    for name in sorted(tensors):
        t = tensors[name]
        if not isinstance(t, TensorEntry):
            t = TensorEntry(name, np.asarray(t, dtype=np.float32), "float32")
        if name not in shapes:
            raise CheckpointError(f"unknown tensor name {name!r}")
        if tuple(t.array.shape) != shapes[name]:
            raise CheckpointError(
                f"tensor {name!r} has shape {t.array.shape}, expected {shapes[name]}"
            )
        if t.dtype not in _DTYPES:
            raise CheckpointError(f"unsupported dtype {t.dtype!r}")
        if t.dtype != "float32" and t.scale_exp is None:
            raise CheckpointError(f"integer tensor {name!r} needs a scale exponent")
        entries.append(t)
    missing = set(shapes) - set(tensors)
    if missing:
        raise CheckpointError(f"missing tensors: {sorted(missing)}")

    manifest = []
    blobs = []
    for t in entries:
        blob = np.ascontiguousarray(t.array.astype(_DTYPES[t.dtype])).tobytes()
        manifest.append(
            {
                "name": t.name,
                "shape": list(t.array.shape),
                "dtype": t.dtype,
                "scale_exp": t.scale_exp,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
    header = json.dumps({"config": config.to_dict(), "manifest": manifest}).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([VERSION]))
        f.write(len(header).to_bytes(4, "little"))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_checkpoint(path):
    """Returns (config, {name: TensorEntry}, sha256 digest of the blobs)."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise CheckpointError("bad magic; not a PTXF checkpoint")
    if data[4] != VERSION:
        raise CheckpointError(f"unsupported version {data[4]}")
    header_len = int.from_bytes(data[5:9], "little")
    if len(data) < 9 + header_len:
        raise CheckpointError("truncated header")
    header = json.loads(data[9 : 9 + header_len].decode())
    config = ModelConfig.from_dict(header["config"])
    shapes = expected_shapes(config)

    tensors = {}
    digest = hashlib.sha256()
    offset = 9 + header_len
    for item in header["manifest"]:
        name = item["name"]
        if name not in shapes:
            raise CheckpointError(f"unknown tensor name {name!r}")
        if tuple(item["shape"]) != shapes[name]:
            raise CheckpointError(
                f"tensor {name!r} declares shape {item['shape']}, expected {shapes[name]}"
            )
        dt = _DTYPES.get(item["dtype"])
        if dt is None:
            raise CheckpointError(f"unsupported dtype {item['dtype']!r}")
        nbytes = int(np.prod(item["shape"])) * dt.itemsize
        if item["nbytes"] != nbytes:
            raise CheckpointError(f"tensor {name!r} blob length mismatch")
        blob = data[offset : offset + nbytes]
        if len(blob) < nbytes:
            raise CheckpointError(f"truncated blob for tensor {name!r}")
        digest.update(blob)
        arr = np.frombuffer(blob, dtype=dt).reshape(item["shape"])
        tensors[name] = TensorEntry(name, arr, item["dtype"], item["scale_exp"])
        offset += nbytes
    missing = set(shapes) - set(tensors)
    if missing:
        raise CheckpointError(f"missing tensors: {sorted(missing)}")
    hexdigest = digest.hexdigest()
    log.info("loaded checkpoint %s (blob digest %s)", path, hexdigest)
    return config, tensors, hexdigest
