"""Plastic-attention transformer inference engine."""

from .config import ModelConfig, small_config, tiny_config
from .engine import FewShotModel, evaluate, init_weights
from .episodes import Episode, OmniglotDataset, SyntheticFewShotDataset, sample_episode
from .numerics import QuantSpec, QuantizedTensor

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "tiny_config",
    "small_config",
    "FewShotModel",
    "evaluate",
    "init_weights",
    "Episode",
    "OmniglotDataset",
    "SyntheticFewShotDataset",
    "sample_episode",
    "QuantSpec",
    "QuantizedTensor",
]
