"""Dense linear algebra kernels and power-of-two quantization.

Everything here is a pure function over numpy arrays. Float mode computes in
float64; quantization maps to integer codes with power-of-two scales so that
rescaling is a pure shift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Operand dimensions are inconsistent."""


def vmm(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product out[i] = sum_j m[i,j] * x[j]."""
    m = np.asarray(m)
    x = np.asarray(x)
    if m.ndim != 2 or x.ndim != 1:
        raise ShapeError(f"vmm expects (2d, 1d), got {m.shape} and {x.shape}")
    if m.shape[1] != x.shape[0]:
        raise ShapeError(f"vmm: {m.shape} incompatible with vector of length {x.shape[0]}")
    return m @ x


def rmsnorm(x: np.ndarray, gain: np.ndarray | None = None, eps: float = 1e-6) -> np.ndarray:
    """Root-mean-square normalization with optional per-channel gain.

    out[i] = gain[i] * x[i] / sqrt(mean(x^2) + eps)
    """
    x = np.asarray(x, dtype=np.float64)
    if eps <= 0:
        raise ValueError("eps must be positive")
    denom = math.sqrt(float(np.mean(np.square(x))) + eps)
    out = x / denom
    if gain is not None:
        gain = np.asarray(gain, dtype=np.float64)
        if gain.shape != x.shape:
            raise ShapeError(f"gain shape {gain.shape} != input shape {x.shape}")
        out = out * gain
    return out


def softmax(a: np.ndarray) -> np.ndarray:
    """Numerically stable softmax; output is a distribution."""
    a = np.asarray(a, dtype=np.float64)
    if a.size < 1:
        raise ShapeError("softmax needs at least one element")
    e = np.exp(a - np.max(a))
    return e / np.sum(e)


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(np.asarray(x), 0)


@dataclass(frozen=True)
class QuantSpec:
    """Fixed-point format: `bits`-wide integer codes scaled by 2**scale_exp."""

    bits: int
    signed: bool
    scale_exp: int

    def __post_init__(self):
        if not 2 <= self.bits <= 32:
            raise ValueError(f"bitwidth {self.bits} outside [2, 32]")

    @property
    def scale(self) -> float:
        return 2.0 ** self.scale_exp

    @property
    def code_min(self) -> int:
        return -(1 << (self.bits - 1)) if self.signed else 0

    @property
    def code_max(self) -> int:
        return (1 << (self.bits - 1)) - 1 if self.signed else (1 << self.bits) - 1

    @classmethod
    def covering(cls, x: np.ndarray, bits: int, signed: bool = True) -> "QuantSpec":
        """Smallest power-of-two scale whose code range covers max|x|."""
        x = np.asarray(x, dtype=np.float64)
        peak = float(np.max(np.abs(x))) if x.size else 0.0
        if peak == 0.0:
            return cls(bits, signed, 0)
        limit = (1 << (bits - 1)) - 1 if signed else (1 << bits) - 1
        e = math.ceil(math.log2(peak / limit))
        # guard against log2 rounding right at the boundary
        while peak / 2.0**e > limit:
            e += 1
        while peak / 2.0 ** (e - 1) <= limit:
            e -= 1
        return cls(bits, signed, e)


@dataclass
class QuantizedTensor:
    """Integer codes plus the spec needed to dequantize them."""

    codes: np.ndarray
    spec: QuantSpec
    shape: tuple
    saturated: int = 0

    def dequantize(self) -> np.ndarray:
        return self.codes.astype(np.float64) * self.spec.scale


def quantize(x: np.ndarray, spec: QuantSpec) -> QuantizedTensor:
    """Round-half-to-even to the spec's grid, clamping out-of-range values.

    Clamping is silent but counted in the tensor's saturation statistic.
    """
    x = np.asarray(x, dtype=np.float64)
    raw = np.rint(x / spec.scale)
    clamped = np.clip(raw, spec.code_min, spec.code_max)
    saturated = int(np.count_nonzero(raw != clamped))
    return QuantizedTensor(clamped.astype(np.int64), spec, x.shape, saturated)


def dequantize(qt: QuantizedTensor) -> np.ndarray:
    return qt.dequantize()
