"""Training configuration.

The architecture block mirrors the inference engine's config field-for-field
so both sides compute the same digest; any drift shows up as a digest
mismatch before it can show up as silent prediction disagreement.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class ArchConfig:
    """Field-exact mirror of the engine's model config."""

    layers: int
    embed_dim: int
    heads: int
    window: int
    image_pixels: int
    num_classes: int
    scaled_attention: bool = False
    final_norm: bool = False
    rms_eps: float = 1e-6
    weight_bits: int = 8
    activation_bits: int = 16
    trace_bits: int = 8

    @property
    def token_dim(self) -> int:
        return self.image_pixels + self.num_classes + 1

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class TrainConfig:
    arch: ArchConfig
    n_way: int = 5
    k_shot: int = 1
    steps: int = 20000
    batch_episodes: int = 16
    learning_rate: float = 1e-3
    warmup_steps: int = 200
    seed: int = 0
    eval_episodes: int = 512
    dataset: str = "synthetic"  # or "omniglot"
    data_root: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.to_dict()
        return d
