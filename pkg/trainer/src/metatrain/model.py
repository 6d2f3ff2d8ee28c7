"""Torch model mirroring the inference engine's forward math.

Pre-norm RMSNorm blocks, unscaled dot-product attention under a causal
(optionally windowed) mask, no positional encoding, bias-free q/k/v and
output head. `state_tensors()` emits the engine's tensor naming so exports
drop straight into the checkpoint container.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ArchConfig


class RMSNorm(nn.Module):
    def __init__(self, dim: int, eps: float):
        super().__init__()
        self.gain = nn.Parameter(torch.ones(dim))
        self.eps = eps

    def forward(self, x):
        return self.gain * x * torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + self.eps)


class Block(nn.Module):
    def __init__(self, cfg: ArchConfig):
        super().__init__()
        d = cfg.embed_dim
        self.heads = cfg.heads
        self.head_dim = d // cfg.heads
        self.window = cfg.window
        self.scaled = cfg.scaled_attention
        self.attn_norm = RMSNorm(d, cfg.rms_eps)
        self.wq = nn.Linear(d, d, bias=False)
        self.wk = nn.Linear(d, d, bias=False)
        self.wv = nn.Linear(d, d, bias=False)
        self.wo = nn.Linear(d, d, bias=True)
        self.mlp_norm = RMSNorm(d, cfg.rms_eps)
        self.w1 = nn.Linear(d, 4 * d, bias=False)
        self.w2 = nn.Linear(4 * d, d, bias=True)

    def _mask(self, t: int, device):
        idx = torch.arange(t, device=device)
        visible = idx[None, :] <= idx[:, None]
        visible &= idx[None, :] > idx[:, None] - self.window
        return visible

    def forward(self, x):
        b, t, d = x.shape
        xn = self.attn_norm(x)
        q = self.wq(xn).view(b, t, self.heads, self.head_dim).transpose(1, 2)
        k = self.wk(xn).view(b, t, self.heads, self.head_dim).transpose(1, 2)
        v = self.wv(xn).view(b, t, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-1, -2)
        if self.scaled:
            scores = scores / math.sqrt(self.head_dim)
        scores = scores.masked_fill(~self._mask(t, x.device), float("-inf"))
        y = (scores.softmax(-1) @ v).transpose(1, 2).reshape(b, t, d)
        x = x + self.wo(y)
        return x + self.w2(F.relu(self.w1(self.mlp_norm(x))))

    def step(self, x, cache):
        """Single-token autoregressive step; cache holds (K, V) per head."""
        xn = self.attn_norm(x)
        q = self.wq(xn).view(self.heads, self.head_dim)
        k = self.wk(xn).view(self.heads, self.head_dim)
        v = self.wv(xn).view(self.heads, self.head_dim)
        cache["k"].append(k)
        cache["v"].append(v)
        K = torch.stack(cache["k"][-self.window:], dim=1)  # (H, n, dh)
        V = torch.stack(cache["v"][-self.window:], dim=1)
        scores = (K * q[:, None, :]).sum(-1)
        if self.scaled:
            scores = scores / math.sqrt(self.head_dim)
        p = scores.softmax(-1)
        y = (p[:, :, None] * V).sum(1).reshape(-1)
        x = x + self.wo(y)
        return x + self.w2(F.relu(self.w1(self.mlp_norm(x))))


class FewShotTransformer(nn.Module):
    def __init__(self, cfg: ArchConfig):
        super().__init__()
        self.cfg = cfg
        d = cfg.embed_dim
        self.encoder = nn.Linear(cfg.token_dim, d, bias=True)
        self.encoder_norm = RMSNorm(d, cfg.rms_eps)
        self.blocks = nn.ModuleList(Block(cfg) for _ in range(cfg.layers))
        self.final_norm = RMSNorm(d, cfg.rms_eps) if cfg.final_norm else None
        self.head = nn.Linear(d, cfg.num_classes, bias=False)

    def embed(self, tokens):
        return self.encoder_norm(self.encoder(tokens))

    def forward(self, tokens):
        """(B, T, token_dim) -> class scores at every position (B, T, N)."""
        x = self.embed(tokens)
        for block in self.blocks:
            x = block(x)
        if self.final_norm is not None:
            x = self.final_norm(x)
        return self.head(x)

    @torch.no_grad()
    def forward_autoregressive(self, tokens):
        """(T, token_dim) -> (T, N), one token at a time with a KV cache."""
        caches = [{"k": [], "v": []} for _ in self.blocks]
        outs = []
        for t in range(tokens.shape[0]):
            x = self.embed(tokens[t])
            for block, cache in zip(self.blocks, caches):
                x = block.step(x, cache)
            if self.final_norm is not None:
                x = self.final_norm(x)
            outs.append(self.head(x))
        return torch.stack(outs)

    def state_tensors(self) -> dict:
        """Weights keyed by the engine's checkpoint tensor names."""
        out = {
            "encoder.weight": self.encoder.weight,
            "encoder.bias": self.encoder.bias,
            "encoder.gain": self.encoder_norm.gain,
            "head.weight": self.head.weight,
        }
        if self.final_norm is not None:
            out["final_norm.gain"] = self.final_norm.gain
        for i, blk in enumerate(self.blocks):
            p = f"layers.{i}"
            out[f"{p}.attn.gain"] = blk.attn_norm.gain
            out[f"{p}.attn.wq"] = blk.wq.weight
            out[f"{p}.attn.wk"] = blk.wk.weight
            out[f"{p}.attn.wv"] = blk.wv.weight
            out[f"{p}.attn.wo"] = blk.wo.weight
            out[f"{p}.attn.bo"] = blk.wo.bias
            out[f"{p}.mlp.gain"] = blk.mlp_norm.gain
            out[f"{p}.mlp.w1"] = blk.w1.weight
            out[f"{p}.mlp.w2"] = blk.w2.weight
            out[f"{p}.mlp.b2"] = blk.w2.bias
        return {name: t.detach().cpu().numpy() for name, t in out.items()}
