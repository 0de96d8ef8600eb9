"""Backbone abstraction: a per-token contextual encoder plus MLM head.

Anything exposing ``encode`` and ``mlm_logits`` with the shapes documented
on :class:`Backbone` can drive the task heads; the bundled
:class:`ToyTransformerBackbone` is small enough for CPU tests while
supporting both dense and windowed+global attention. ``window_size`` is the
one-sided local span, so any sequence no longer than the window sees full
attention and the two modes agree.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import torch
from torch import nn

from .corpus import FLAG_USER, SerializedThread

DENSE = "dense"
WINDOWED_GLOBAL = "windowed+global"


@dataclass
class BackboneConfig:
    vocab_size: int
    hidden_size: int = 64
    num_layers: int = 2
    num_heads: int = 4
    max_positions: int = 4096
    attention_mode: str = DENSE
    window_size: int = 512
    ffn_size: int | None = None

    def __post_init__(self) -> None:
        if self.attention_mode not in (DENSE, WINDOWED_GLOBAL):
            raise ValueError(f"unknown attention mode {self.attention_mode!r}")
        if self.hidden_size % self.num_heads != 0:
            raise ValueError("hidden_size must be divisible by num_heads")
        if self.ffn_size is None:
            self.ffn_size = 4 * self.hidden_size


class Backbone(abc.ABC):
    """Per-token encoder interface used by all task heads."""

    hidden_size: int

    @abc.abstractmethod
    def encode(
        self, token_ids: torch.Tensor, global_attention: torch.Tensor | None = None
    ) -> torch.Tensor:
        """[L] int ids (+ optional [L] bool global flags) -> [L, hidden] vectors."""

    @abc.abstractmethod
    def mlm_logits(self, vectors: torch.Tensor) -> torch.Tensor:
        """[L, hidden] vectors -> [L, vocab] token scores."""


class _SelfAttention(nn.Module):
    def __init__(self, hidden: int, heads: int) -> None:
        super().__init__()
        self.heads = heads
        self.head_dim = hidden // heads
        self.qkv = nn.Linear(hidden, 3 * hidden)
        self.out = nn.Linear(hidden, hidden)

    def forward(self, x: torch.Tensor, attn_mask: torch.Tensor | None) -> torch.Tensor:
        length, hidden = x.shape
        qkv = self.qkv(x).reshape(length, 3, self.heads, self.head_dim).permute(1, 2, 0, 3)
        q, k, v = qkv[0], qkv[1], qkv[2]  # [heads, L, d]
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.head_dim)
        if attn_mask is not None:
            scores = scores.masked_fill(~attn_mask, float("-inf"))
        ctx = torch.softmax(scores, dim=-1) @ v  # [heads, L, d]
        return self.out(ctx.permute(1, 0, 2).reshape(length, hidden))


class _EncoderLayer(nn.Module):
    def __init__(self, cfg: BackboneConfig) -> None:
        super().__init__()
        self.attn = _SelfAttention(cfg.hidden_size, cfg.num_heads)
        self.norm1 = nn.LayerNorm(cfg.hidden_size)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.hidden_size, cfg.ffn_size),
            nn.GELU(),
            nn.Linear(cfg.ffn_size, cfg.hidden_size),
        )
        self.norm2 = nn.LayerNorm(cfg.hidden_size)

    def forward(self, x: torch.Tensor, attn_mask: torch.Tensor | None) -> torch.Tensor:
        x = self.norm1(x + self.attn(x, attn_mask))
        return self.norm2(x + self.ffn(x))


class ToyTransformerBackbone(nn.Module, Backbone):
    """Small dense-by-default transformer with a weight-tied MLM head."""

    def __init__(self, config: BackboneConfig, seed: int = 0) -> None:
        super().__init__()
        self.config = config
        self.hidden_size = config.hidden_size
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.tok_emb = nn.Embedding(config.vocab_size, config.hidden_size)
            self.pos_emb = nn.Embedding(config.max_positions, config.hidden_size)
            self.emb_norm = nn.LayerNorm(config.hidden_size)
            self.layers = nn.ModuleList(_EncoderLayer(config) for _ in range(config.num_layers))
            self.mlm_dense = nn.Linear(config.hidden_size, config.hidden_size)
            self.mlm_norm = nn.LayerNorm(config.hidden_size)
            self.mlm_bias = nn.Parameter(torch.zeros(config.vocab_size))

    def _attention_mask(
        self, length: int, global_attention: torch.Tensor | None
    ) -> torch.Tensor | None:
        if self.config.attention_mode == DENSE:
            return None
        idx = torch.arange(length)
        local = (idx.unsqueeze(0) - idx.unsqueeze(1)).abs() <= self.config.window_size
        if global_attention is not None and bool(global_attention.any()):
            g = global_attention.bool()
            local = local | g.unsqueeze(0) | g.unsqueeze(1)
        return local

    def encode(
        self, token_ids: torch.Tensor, global_attention: torch.Tensor | None = None
    ) -> torch.Tensor:
        ids = torch.as_tensor(token_ids, dtype=torch.long)
        length = ids.size(0)
        if length > self.config.max_positions:
            raise ValueError(
                f"sequence of {length} tokens exceeds max_positions {self.config.max_positions}"
            )
        mask = self._attention_mask(length, global_attention)
        x = self.emb_norm(self.tok_emb(ids) + self.pos_emb(torch.arange(length)))
        for layer in self.layers:
            x = layer(x, mask)
        return x

    def mlm_logits(self, vectors: torch.Tensor) -> torch.Tensor:
        x = self.mlm_norm(torch.nn.functional.gelu(self.mlm_dense(vectors)))
        return x @ self.tok_emb.weight.t() + self.mlm_bias


GLOBAL_USER_TOKENS = "user_tokens"
GLOBAL_NONE = "none"


def set_global_attention(st: SerializedThread, policy: str) -> SerializedThread:
    """Re-derive per-token global-attention flags under the given policy."""
    if policy == GLOBAL_USER_TOKENS:
        flags = [f == FLAG_USER for f in st.special_flags]
    elif policy == GLOBAL_NONE:
        flags = [False] * len(st)
    else:
        raise ValueError(f"unknown global attention policy {policy!r}")
    return st.with_global_attention(flags)
