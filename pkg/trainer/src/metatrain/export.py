"""PTXF checkpoint writer and post-training quantizer.

Re-implements the container byte layout from its published schema (magic
"PTXF", version byte, u32 LE header length, JSON header, raw blobs in
manifest order). Quantization uses per-tensor power-of-two scales with
round-half-to-even, matrices at weight_bits and vectors at activation_bits.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .config import ArchConfig

MAGIC = b"PTXF"
VERSION = 1

_DTYPES = {
    "float32": np.dtype("<f4"),
    "int8": np.dtype("i1"),
    "int16": np.dtype("<i2"),
}


def covering_scale_exp(x: np.ndarray, bits: int) -> int:
    peak = float(np.max(np.abs(x))) if x.size else 0.0
    if peak == 0.0:
        return 0
    limit = (1 << (bits - 1)) - 1
    e = math.ceil(math.log2(peak / limit))
    while peak / 2.0**e > limit:
        e += 1
    while peak / 2.0 ** (e - 1) <= limit:
        e -= 1
    return e


def quantize_tensor(x: np.ndarray, bits: int):
    """(codes, scale_exp, saturation_count) with power-of-two scale."""
    e = covering_scale_exp(x, bits)
    limit = (1 << (bits - 1)) - 1
    raw = np.rint(x / 2.0**e)
    codes = np.clip(raw, -limit - 1, limit)
    return codes.astype(np.int64), e, int(np.count_nonzero(raw != codes))


def write_checkpoint(path, arch: ArchConfig, tensors: dict, quantized: bool = False):
    """`tensors` maps engine tensor names to float arrays.

    Float export stores float32 blobs; quantized export stores int8 matrices
    and int16 vectors with their scale exponents. Returns per-tensor stats.
    """
    manifest = []
    blobs = []
    stats = {}
    for name in sorted(tensors):
        arr = np.asarray(tensors[name], dtype=np.float64)
        if quantized:
            bits = arch.weight_bits if arr.ndim == 2 else arch.activation_bits
            codes, scale_exp, saturated = quantize_tensor(arr, bits)
            dtype = "int8" if bits <= 8 else "int16"
            stored = codes.astype(_DTYPES[dtype])
            stats[name] = {
                "scale_exp": scale_exp,
                "saturated": saturated,
                "max_abs_error": float(np.max(np.abs(codes * 2.0**scale_exp - arr)))
                if arr.size else 0.0,
            }
        else:
            dtype, scale_exp = "float32", None
            stored = arr.astype(_DTYPES[dtype])
        blob = np.ascontiguousarray(stored).tobytes()
        manifest.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": dtype,
                "scale_exp": scale_exp,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
    header = json.dumps({"config": arch.to_dict(), "manifest": manifest}).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(bytes([VERSION]))
        f.write(len(header).to_bytes(4, "little"))
        f.write(header)
        for blob in blobs:
            f.write(blob)
    return stats
