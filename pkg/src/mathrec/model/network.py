"""Encoder-decoder recognizer with the length-aware head."""

from __future__ import annotations

import math
from typing import Optional

import cv2
import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from mathrec.errors import DisabledModule, SequenceTooLong, ShapeError
from mathrec.model.config import ModelConfig
from mathrec.model.encoder import Mlp, SwinEncoder, sinusoid_1d


class Attention(nn.Module):
    """Multi-head attention with an explicit softmax (masked weights are exactly 0)."""

    def __init__(self, dim: int, heads: int, dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, 2 * dim)
        self.out = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, memory: torch.Tensor,
                mask: Optional[torch.Tensor] = None) -> torch.Tensor:
        b, n, d = x.shape
        m = memory.shape[1]
        q = self.q(x).view(b, n, self.heads, self.head_dim).transpose(1, 2)
        k, v = self.kv(memory).view(b, m, 2, self.heads, self.head_dim).permute(2, 0, 3, 1, 4)
        scores = (q @ k.transpose(-2, -1)) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores.masked_fill(mask, float("-inf"))
        weights = self.drop(scores.softmax(-1))
        return self.out((weights @ v).transpose(1, 2).reshape(b, n, d))


class DecoderLayer(nn.Module):
    def __init__(self, dim: int, heads: int, ffn_ratio: int, dropout: float):
        super().__init__()
        self.self_norm = nn.LayerNorm(dim)
        self.self_attn = Attention(dim, heads, dropout)
        self.cross_norm = nn.LayerNorm(dim)
        self.cross_attn = Attention(dim, heads, dropout)
        self.ffn_norm = nn.LayerNorm(dim)
        self.ffn = Mlp(dim, dim * ffn_ratio, dropout)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, memory, causal_mask):
        h = self.self_norm(x)
        x = x + self.drop(self.self_attn(h, h, causal_mask))
        x = x + self.drop(self.cross_attn(self.cross_norm(x), memory))
        return x + self.ffn(self.ffn_norm(x))


class LengthAwareModule(nn.Module):
    """Self-attention + average pooling -> per-symbol counts -> length embedding.

    The count head sees gradient only from the length loss: the copy of the
    counts fed to the embedding MLP is computed with detached head weights,
    so the decoder's loss still reaches the pooled feature and the encoder.
    """

    def __init__(self, dim: int, vocab_size: int, heads: int):
        super().__init__()
        self.norm = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads)
        self.count_head = nn.Linear(dim, vocab_size)
        self.embed = nn.Sequential(nn.Linear(vocab_size, dim), nn.GELU(), nn.Linear(dim, dim))
        self.identity_attention = False

    def pooled_feature(self, z: torch.Tensor) -> torch.Tensor:
        if not self.identity_attention:
            h = self.norm(z)
            z = z + self.attn(h, h)
        return z.mean(dim=1)

    def forward(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        g = self.pooled_feature(z)
        counts = F.softplus(self.count_head(g))
        frozen = F.softplus(F.linear(g, self.count_head.weight.detach(),
                                     self.count_head.bias.detach()))
        return counts, self.embed(frozen)


class MarkupDecoder(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        d = config.feature_dim
        self.max_len = config.max_sequence_length
        self.embed_scale = math.sqrt(d)
        self.token_embed = nn.Embedding(config.vocab_size, d)
        self.pos_embed = nn.Embedding(config.max_sequence_length, d)
        self.embed_norm = nn.LayerNorm(d)
        self.drop = nn.Dropout(config.dropout)
        self.layers = nn.ModuleList(
            DecoderLayer(d, config.decoder_heads, config.ffn_ratio, config.dropout)
            for _ in range(config.decoder_layers))
        self.final_norm = nn.LayerNorm(d)
        nn.init.normal_(self.token_embed.weight, std=d ** -0.5)
        # sinusoidal start: a 0.02-scale random init leaves position nearly invisible next to
        # unit-scale token embeddings, and cross-attention queries then cannot tell steps apart
        with torch.no_grad():
            self.pos_embed.weight.copy_(sinusoid_1d(config.max_sequence_length, d))

    def forward(self, memory: torch.Tensor, input_ids: torch.Tensor,
                length_embedding: Optional[torch.Tensor]) -> torch.Tensor:
        b, n = input_ids.shape
        if n > self.max_len:
            raise SequenceTooLong(f"decoder input of length {n} exceeds {self.max_len}")
        positions = torch.arange(n, device=input_ids.device)
        x = self.token_embed(input_ids) * self.embed_scale + self.pos_embed(positions)[None]
        if length_embedding is not None:
            x = x + length_embedding[:, None, :]
        x = self.drop(self.embed_norm(x))
        causal = torch.ones(n, n, dtype=torch.bool, device=x.device).triu(1)
        for layer in self.layers:
            x = layer(x, memory, causal)
        return self.final_norm(x) @ self.token_embed.weight.t()


class FormulaRecognizer(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = SwinEncoder(config)
        self.lam = (LengthAwareModule(config.feature_dim, config.vocab_size, config.lam_heads)
                    if config.lam_enabled else None)
        self.decoder = MarkupDecoder(config)

    def encode(self, images: torch.Tensor) -> torch.Tensor:
        return self.encoder(images)

    def lam_forward(self, z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Return ``(counts (B, C), length_embedding (B, D))``."""
        if self.lam is None:
            raise DisabledModule("length-aware module is disabled in this model")
        if z.ndim != 3 or z.shape[-1] != self.config.feature_dim:
            raise ShapeError(f"expected features (B, T, {self.config.feature_dim}), got {tuple(z.shape)}")
        return self.lam(z)

    def zero_length_embedding(self, z: torch.Tensor) -> torch.Tensor:
        return z.new_zeros(z.shape[0], self.config.feature_dim)

    def length_embedding(self, z: torch.Tensor) -> tuple[Optional[torch.Tensor], torch.Tensor]:
        if self.lam is None:
            return None, self.zero_length_embedding(z)
        return self.lam(z)

    def decoder_forward(self, z: torch.Tensor, input_ids: torch.Tensor,
                        length_embedding: Optional[torch.Tensor]) -> torch.Tensor:
        return self.decoder(z, input_ids, length_embedding)

    def forward(self, images: torch.Tensor, input_ids: torch.Tensor):
        """Teacher-forced pass; returns ``(logits, counts_or_None)``."""
        z = self.encode(images)
        counts, embedding = self.length_embedding(z)
        return self.decoder(z, input_ids, embedding), counts


def preprocess(image: np.ndarray, canvas: tuple[int, int]) -> torch.Tensor:
    """uint8 ``(H, W, 3)`` -> standardized float tensor ``(3, *canvas)``.

    Images larger than the canvas are shrunk with aspect ratio kept; the result
    sits in the top-left corner of a white canvas.  Each channel is then shifted
    and scaled to zero mean and unit variance.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeError(f"expected a 3-channel image, got shape {image.shape}")
    ch, cw = canvas
    h, w = image.shape[:2]
    scale = min(ch / h, cw / w, 1.0)
    if scale < 1.0:
        nh, nw = max(1, int(h * scale)), max(1, int(w * scale))
        image = cv2.resize(image, (nw, nh), interpolation=cv2.INTER_AREA)
        h, w = nh, nw
    out = np.full((ch, cw, 3), 255, np.uint8)
    out[:h, :w] = image
    x = torch.from_numpy(out).permute(2, 0, 1).float().div_(255.0)
    mean = x.mean(dim=(1, 2), keepdim=True)
    std = x.std(dim=(1, 2), keepdim=True)
    return (x - mean) / (std + 1e-6)
