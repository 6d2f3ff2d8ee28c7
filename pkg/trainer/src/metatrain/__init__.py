"""Meta-trainer producing few-shot transformer checkpoints in the PTXF container."""

from .config import ArchConfig, TrainConfig
from .data import (
    Episode,
    OmniglotDataset,
    SyntheticFewShotDataset,
    episode_stream,
    episode_tokens,
    sample_episode,
    training_batch,
)
from .export import quantize_tensor, write_checkpoint
from .model import FewShotTransformer
from .train import DivergenceError, TrainResult, evaluate, export, train

__all__ = [
    "ArchConfig",
    "TrainConfig",
    "Episode",
    "OmniglotDataset",
    "SyntheticFewShotDataset",
    "episode_stream",
    "episode_tokens",
    "sample_episode",
    "training_batch",
    "quantize_tensor",
    "write_checkpoint",
    "FewShotTransformer",
    "DivergenceError",
    "TrainResult",
    "evaluate",
    "export",
    "train",
]
