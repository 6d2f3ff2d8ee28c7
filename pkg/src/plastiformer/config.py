"""Model configuration shared by checkpoints, the engine and the trainer."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class ModelConfig:
    layers: int
    embed_dim: int
    heads: int
    window: int
    image_pixels: int
    num_classes: int
    scaled_attention: bool = False
    final_norm: bool = False
    rms_eps: float = 1e-6
    # bitwidths used when exporting the quantized ladder rung
    weight_bits: int = 8
    activation_bits: int = 16
    trace_bits: int = 8

    def __post_init__(self):
        if self.embed_dim % self.heads != 0:
            raise ValueError(f"embed dim {self.embed_dim} not divisible by {self.heads} heads")
        if self.window < 1:
            raise ValueError("window must be >= 1")

    @property
    def token_dim(self) -> int:
        # pixels + one-hot label channels + one query-marker channel
        return self.image_pixels + self.num_classes + 1

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def tiny_config(num_classes: int = 5, image_pixels: int = 784, window: int | None = None) -> ModelConfig:
    """4 layers, embed dim 128, 1 head."""
    return ModelConfig(
        layers=4, embed_dim=128, heads=1,
        window=window if window is not None else 64,
        image_pixels=image_pixels, num_classes=num_classes,
    )


def small_config(num_classes: int = 5, image_pixels: int = 784, window: int | None = None) -> ModelConfig:
    """6 layers, embed dim 256, 8 heads."""
    return ModelConfig(
        layers=6, embed_dim=256, heads=8,
        window=window if window is not None else 128,
        image_pixels=image_pixels, num_classes=num_classes,
    )
