"""End-to-end few-shot model: embedding, transformer stack, output head.

Three execution modes share one weight set:
  float   - dense reference blocks, float64 math
  quant   - dense reference blocks over power-of-two-quantized weights
  plastic - attention runs through the plasticity engine
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .checkpoint import TensorEntry, expected_shapes, load_checkpoint
from .config import ModelConfig
from .episodes import Episode, episode_tokens
from .numerics import QuantSpec, quantize
from .plastic_attention import PlasticAttentionLayer
from .reference import MlpBlock, RefAttentionBlock, TransformerLayer

MODES = ("float", "quant", "plastic")


def init_weights(config: ModelConfig, rng: np.random.Generator) -> dict:
    """Random float weights with 1/sqrt(fan_in) scaling."""
    out = {}
    for name, shape in expected_shapes(config).items():
        if name.endswith(".gain"):
            out[name] = np.ones(shape)
        elif name.endswith((".bias", ".bo", ".b2")):
            out[name] = np.zeros(shape)
        else:
            out[name] = rng.normal(0.0, 1.0 / math.sqrt(shape[-1]), size=shape)
    return out


def quantize_weights(config: ModelConfig, weights: dict) -> dict:
    """Per-tensor power-of-two quantization: matrices to weight_bits,
    vectors (biases, gains) to activation_bits. Returns TensorEntry dict."""
    out = {}
    for name, arr in weights.items():
        arr = np.asarray(arr, dtype=np.float64)
        bits = config.weight_bits if arr.ndim == 2 else config.activation_bits
        spec = QuantSpec.covering(arr, bits, signed=True)
        qt = quantize(arr, spec)
        dtype = "int8" if bits <= 8 else "int16"
        out[name] = TensorEntry(name, qt.codes.astype(np.int64), dtype, spec.scale_exp)
    return out


@dataclass
class EvalResult:
    correct: int
    count: int
    predictions: list = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.correct / self.count

    def confidence_interval(self, z: float = 1.959964) -> tuple:
        """95% Wilson score interval for the accuracy."""
        n, p = self.count, self.accuracy
        denom = 1 + z**2 / n
        center = (p + z**2 / (2 * n)) / denom
        half = z * math.sqrt(p * (1 - p) / n + z**2 / (4 * n**2)) / denom
        return (max(0.0, center - half), min(1.0, center + half))


class FewShotModel:
    def __init__(self, config: ModelConfig, weights: dict, mode: str = "float"):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        self.config = config
        self.mode = mode
        if mode == "quant":
            entries = quantize_weights(config, weights)
            weights = {name: e.values() for name, e in entries.items()}
        self.weights = {k: np.asarray(v, dtype=np.float64) for k, v in weights.items()}
        self.layers = [self._build_layer(i) for i in range(config.layers)]

    @classmethod
    def from_checkpoint(cls, path, mode: str = "float"):
        config, tensors, digest = load_checkpoint(path)
        weights = {name: t.values() for name, t in tensors.items()}
        model = cls(config, weights, mode)
        model.checkpoint_digest = digest
        return model

    def _build_layer(self, i: int) -> TransformerLayer:
        c, w = self.config, self.weights
        p = f"layers.{i}"
        args = dict(
            wq=w[f"{p}.attn.wq"], wk=w[f"{p}.attn.wk"], wv=w[f"{p}.attn.wv"],
            wo=w[f"{p}.attn.wo"], bo=w[f"{p}.attn.bo"], norm_gain=w[f"{p}.attn.gain"],
            n_heads=c.heads, eps=c.rms_eps, scaled=c.scaled_attention,
        )
        if self.mode == "plastic":
            attn = PlasticAttentionLayer(window=c.window, **args)
        else:
            attn = RefAttentionBlock(window=c.window, **args)
        mlp = MlpBlock(w[f"{p}.mlp.w1"], w[f"{p}.mlp.w2"], w[f"{p}.mlp.b2"],
                       w[f"{p}.mlp.gain"], eps=c.rms_eps)
        return TransformerLayer(attn, mlp)

    def reset(self):
        for layer in self.layers:
            layer.reset()

    def embed_token(self, token: np.ndarray) -> np.ndarray:
        if token.shape != (self.config.token_dim,):
            raise numerics.ShapeError(
                f"expected token of dim {self.config.token_dim}, got {token.shape}"
            )
        w = self.weights
        pre = w["encoder.weight"] @ token + w["encoder.bias"]
        return numerics.rmsnorm(pre, w["encoder.gain"], self.config.rms_eps)

    def _head(self, h: np.ndarray) -> np.ndarray:
        if self.config.final_norm:
            h = numerics.rmsnorm(h, self.weights["final_norm.gain"], self.config.rms_eps)
        return self.weights["head.weight"] @ h

    def forward_tokens(self, tokens: np.ndarray) -> np.ndarray:
        """Autoregressive pass; returns per-position class scores (T, N)."""
        self.reset()
        scores = []
        for t, token in enumerate(tokens):
            h = self.embed_token(token)
            for layer in self.layers:
                h = layer.layer_step(h, t)
            scores.append(self._head(h))
        return np.stack(scores)

    def forward_tokens_parallel(self, tokens: np.ndarray) -> np.ndarray:
        """Causal-mask parallel pass (reference modes only)."""
        if self.mode == "plastic":
            raise ValueError("parallel prefill is not available on the plastic path")
        self.reset()
        hs = np.stack([self.embed_token(tok) for tok in tokens])
        for layer in self.layers:
            hs = layer.forward_parallel(hs)
        return np.stack([self._head(h) for h in hs])

    def run_episode(self, ep: Episode) -> tuple:
        """(predicted label, class scores at the query position)."""
        if ep.n != self.config.num_classes:
            raise ValueError(
                f"episode is {ep.n}-way but model expects {self.config.num_classes}"
            )
        scores = self.forward_tokens(episode_tokens(ep))[-1]
        return int(np.argmax(scores)), scores

    def spawn(self) -> "FewShotModel":
        """Same weights, fresh per-sequence state; for worker threads."""
        clone = object.__new__(FewShotModel)
        clone.config = self.config
        clone.mode = self.mode
        clone.weights = self.weights
        clone.layers = [clone._build_layer(i) for i in range(self.config.layers)]
        return clone


def evaluate(model: FewShotModel, episodes, count: int, workers: int = 1) -> EvalResult:
    """Accuracy over `count` episodes with per-episode predictions kept."""
    if count < 1:
        raise ValueError("episode count must be >= 1")
    eps = [next(episodes) if hasattr(episodes, "__next__") else episodes[i]
           for i in range(count)]
    if workers <= 1:
        preds = [model.run_episode(ep)[0] for ep in eps]
    else:
        models = [model.spawn() for _ in range(workers)]

        def run_chunk(args):
            m, chunk = args
            return [m.run_episode(ep)[0] for ep in chunk]

        chunks = [(models[i], eps[i::workers]) for i in range(workers)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, chunks))
        preds = [0] * count
        for i, res in enumerate(results):
            for j, pred in zip(range(i, count, workers), res):
                preds[j] = pred
    correct = sum(1 for ep, p in zip(eps, preds) if p == ep.query_label)
    return EvalResult(correct, count, preds)
