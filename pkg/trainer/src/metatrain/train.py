"""Meta-training loop for the few-shot transformer.

Trains with AdamW and a warmup + cosine-decay schedule on batches of
freshly sampled episodes; the loss is cross-entropy on the query position
only. Exports both a float checkpoint and a power-of-two quantized one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn.functional as F

from .config import TrainConfig
from .data import (
    OmniglotDataset,
    SyntheticFewShotDataset,
    episode_stream,
    episode_tokens,
    training_batch,
)
from .export import write_checkpoint
from .model import FewShotTransformer


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""


@dataclass
class TrainResult:
    model: FewShotTransformer
    log: list = field(default_factory=list)  # (step, loss, lr) tuples
    eval_accuracy: float | None = None


def make_dataset(cfg: TrainConfig, seed_offset: int = 0):
    if cfg.dataset == "synthetic":
        return SyntheticFewShotDataset(pixels=cfg.arch.image_pixels,
                                       seed=cfg.seed + seed_offset)
    if cfg.dataset == "omniglot":
        if cfg.data_root is None:
            raise ValueError("omniglot dataset requires data_root")
        return OmniglotDataset(cfg.data_root)
    raise ValueError(f"unknown dataset {cfg.dataset!r}")


def lr_at(step: int, cfg: TrainConfig) -> float:
    if step < cfg.warmup_steps:
        return cfg.learning_rate * (step + 1) / cfg.warmup_steps
    span = max(cfg.steps - cfg.warmup_steps, 1)
    frac = (step - cfg.warmup_steps) / span
    return cfg.learning_rate * 0.5 * (1.0 + math.cos(math.pi * min(frac, 1.0)))


def train(cfg: TrainConfig, log_every: int = 100, progress=None) -> TrainResult:
    torch.manual_seed(cfg.seed)
    dataset = make_dataset(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    model = FewShotTransformer(cfg.arch)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.learning_rate)
    result = TrainResult(model)
    for step in range(cfg.steps):
        lr = lr_at(step, cfg)
        for group in opt.param_groups:
            group["lr"] = lr
        toks, labels = training_batch(dataset, cfg.n_way, cfg.k_shot,
                                      cfg.batch_episodes, rng)
        logits = model(torch.from_numpy(toks))[:, -1, : cfg.n_way]
        loss = F.cross_entropy(logits, torch.from_numpy(labels))
        if not torch.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        if step % log_every == 0 or step == cfg.steps - 1:
            result.log.append((step, loss.item(), lr))
            if progress is not None:
                progress(step, loss.item(), lr)
    if cfg.eval_episodes:
        result.eval_accuracy = evaluate(model, cfg)
    return result


@torch.no_grad()
def evaluate(model: FewShotTransformer, cfg: TrainConfig,
             episodes: int | None = None, seed: int | None = None) -> float:
    """Accuracy over a reproducible (seed, index) episode stream."""
    dataset = make_dataset(cfg, seed_offset=1000)
    stream = episode_stream(dataset, cfg.n_way, cfg.k_shot,
                            cfg.seed if seed is None else seed)
    count = cfg.eval_episodes if episodes is None else episodes
    model.eval()
    hits = 0
    for _ in range(count):
        ep = next(stream)
        toks = torch.from_numpy(episode_tokens(ep).astype(np.float32))
        logits = model(toks[None])[0, -1, : cfg.n_way]
        hits += int(torch.argmax(logits)) == ep.query_label
    model.train()
    return hits / count


def export(model: FewShotTransformer, cfg: TrainConfig,
           float_path, quant_path=None) -> dict:
    """Write float and (optionally) quantized checkpoints; return quant stats."""
    tensors = model.state_tensors()
    write_checkpoint(float_path, cfg.arch, tensors, quantized=False)
    if quant_path is not None:
        return write_checkpoint(quant_path, cfg.arch, tensors, quantized=True)
    return {}
