"""Hierarchical shifted-window attention encoder.

Patch embedding, then stages of window-attention blocks (alternating plain
and cyclically shifted windows) separated by 2x2 patch merging.  Feature maps
whose sides are not multiples of the window are padded, and padded keys are
masked out of attention.
"""

from __future__ import annotations

import math
from functools import lru_cache

import torch
import torch.nn.functional as F
from torch import nn

from mathrec.errors import ShapeError
from mathrec.model.config import ModelConfig

MASK_VALUE = -1e9


@lru_cache(maxsize=64)
def _relative_index(wh: int, ww: int, window: int) -> torch.Tensor:
    coords = torch.stack(torch.meshgrid(torch.arange(wh), torch.arange(ww), indexing="ij")).flatten(1)
    rel = coords[:, :, None] - coords[:, None, :]
    rel = rel.permute(1, 2, 0) + (window - 1)
    return rel[..., 0] * (2 * window - 1) + rel[..., 1]


@lru_cache(maxsize=64)
def _window_mask(h: int, w: int, wh: int, ww: int, sh: int, sw: int) -> torch.Tensor | None:
    """Additive mask (num_windows, N, N) for padded and/or shifted windows, or None."""
    hp, wp = -(-h // wh) * wh, -(-w // ww) * ww
    if hp == h and wp == w and sh == 0 and sw == 0:
        return None
    region = torch.zeros(hp, wp)
    label = 0
    for hs in ((slice(0, hp - wh), slice(hp - wh, hp - sh), slice(hp - sh, hp)) if sh else (slice(0, hp),)):
        for ws in ((slice(0, wp - ww), slice(wp - ww, wp - sw), slice(wp - sw, wp)) if sw else (slice(0, wp),)):
            region[hs, ws] = label
            label += 1
    valid = torch.zeros(hp, wp, dtype=torch.bool)
    valid[:h, :w] = True
    if sh or sw:
        valid = torch.roll(valid, shifts=(-sh, -sw), dims=(0, 1))
    region = _partition(region[None, :, :, None], wh, ww).flatten(1)
    valid = _partition(valid[None, :, :, None], wh, ww).flatten(1)
    allowed = (region[:, :, None] == region[:, None, :]) & valid[:, None, :]
    return torch.zeros(allowed.shape).masked_fill(~allowed, MASK_VALUE)


def _partition(x: torch.Tensor, wh: int, ww: int) -> torch.Tensor:
    b, h, w, c = x.shape
    x = x.view(b, h // wh, wh, w // ww, ww, c).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(-1, wh, ww, c)


def _reverse(windows: torch.Tensor, wh: int, ww: int, h: int, w: int) -> torch.Tensor:
    c = windows.shape[-1]
    x = windows.reshape(-1, h // wh, w // ww, wh, ww, c).permute(0, 1, 3, 2, 4, 5)
    return x.reshape(-1, h, w, c)


class WindowAttention(nn.Module):
    def __init__(self, dim: int, heads: int, window: int, dropout: float = 0.0):
        super().__init__()
        self.heads = heads
        self.window = window
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)
        self.bias_table = nn.Parameter(torch.zeros((2 * window - 1) ** 2, heads))
        nn.init.trunc_normal_(self.bias_table, std=0.02)

    def forward(self, x: torch.Tensor, wh: int, ww: int, mask: torch.Tensor | None) -> torch.Tensor:
        bw, n, c = x.shape
        qkv = self.qkv(x).view(bw, n, 3, self.heads, c // self.heads).permute(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        attn = (q * self.scale) @ k.transpose(-2, -1)
        bias = self.bias_table[_relative_index(wh, ww, self.window).reshape(-1)]
        attn = attn + bias.view(n, n, -1).permute(2, 0, 1)[None]
        if mask is not None:
            nw = mask.shape[0]
            attn = attn.view(bw // nw, nw, self.heads, n, n) + mask[None, :, None].to(attn.dtype)
            attn = attn.view(bw, self.heads, n, n)
        attn = self.drop(attn.softmax(-1))
        out = (attn @ v).transpose(1, 2).reshape(bw, n, c)
        return self.proj(out)


class Mlp(nn.Sequential):
    def __init__(self, dim: int, hidden: int, dropout: float = 0.0):
        super().__init__(nn.Linear(dim, hidden), nn.GELU(), nn.Dropout(dropout),
                         nn.Linear(hidden, dim), nn.Dropout(dropout))


class SwinBlock(nn.Module):
    def __init__(self, dim: int, heads: int, window: int, shifted: bool, ffn_ratio: int,
                 dropout: float):
        super().__init__()
        self.window = window
        self.shifted = shifted
        self.norm1 = nn.LayerNorm(dim)
        self.attn = WindowAttention(dim, heads, window, dropout)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = Mlp(dim, dim * ffn_ratio, dropout)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, h, w, c = x.shape
        wh, ww = min(self.window, h), min(self.window, w)
        sh = wh // 2 if self.shifted and h > self.window else 0
        sw = ww // 2 if self.shifted and w > self.window else 0
        shortcut = x
        x = self.norm1(x)
        ph, pw = (-h) % wh, (-w) % ww
        if ph or pw:
            x = F.pad(x, (0, 0, 0, pw, 0, ph))
        hp, wp = h + ph, w + pw
        if sh or sw:
            x = torch.roll(x, shifts=(-sh, -sw), dims=(1, 2))
        mask = _window_mask(h, w, wh, ww, sh, sw)
        windows = _partition(x, wh, ww).reshape(-1, wh * ww, c)
        windows = self.attn(windows, wh, ww, mask)
        x = _reverse(windows.reshape(-1, wh, ww, c), wh, ww, hp, wp)
        if sh or sw:
            x = torch.roll(x, shifts=(sh, sw), dims=(1, 2))
        x = shortcut + x[:, :h, :w]
        return x + self.mlp(self.norm2(x))


class PatchMerging(nn.Module):
    def __init__(self, dim: int):
        super().__init__()
        self.norm = nn.LayerNorm(4 * dim)
        self.reduction = nn.Linear(4 * dim, 2 * dim, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, h, w, c = x.shape
        x = x.reshape(b, h // 2, 2, w // 2, 2, c).permute(0, 1, 3, 4, 2, 5).flatten(3)
        return self.reduction(self.norm(x))


def sinusoid_1d(n: int, dim: int) -> torch.Tensor:
    """(n, dim) table: sines of geometrically spaced frequencies, then the matching cosines."""
    half = dim // 2
    freq = torch.exp(-torch.arange(half, dtype=torch.float64) * (math.log(1e4) / half))
    angle = torch.arange(n, dtype=torch.float64)[:, None] * freq[None]
    return torch.cat([angle.sin(), angle.cos()], dim=1).float()


@lru_cache(maxsize=16)
def sinusoid_2d(h: int, w: int, dim: int) -> torch.Tensor:
    """Fixed (h*w, dim) position code: first half encodes the row, second half the column."""
    rows = sinusoid_1d(h, dim // 2)[:, None, :].expand(h, w, dim // 2)
    cols = sinusoid_1d(w, dim // 2)[None, :, :].expand(h, w, dim // 2)
    return torch.cat([rows, cols], dim=-1).reshape(h * w, dim)


class SwinEncoder(nn.Module):
    """Image batch ``(B, 3, H, W)`` -> features ``(B, T, D)``."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        dims = config.stage_dims
        self.patch_embed = nn.Conv2d(3, dims[0], config.patch_size, config.patch_size)
        self.embed_norm = nn.LayerNorm(dims[0])
        self.stages = nn.ModuleList()
        self.merges = nn.ModuleList()
        for i, (depth, heads) in enumerate(zip(config.encoder_depths, config.encoder_heads)):
            self.stages.append(nn.Sequential(*[
                SwinBlock(dims[i], heads, config.window_size, shifted=j % 2 == 1,
                          ffn_ratio=config.ffn_ratio, dropout=config.dropout)
                for j in range(depth)]))
            if i + 1 < len(dims):
                self.merges.append(PatchMerging(dims[i]))
        self.norm = nn.LayerNorm(dims[-1])
        # window attention only sees relative offsets; the decoder's cross-attention
        # needs to know where on the canvas each feature sits
        self.memory_position = config.memory_position

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        h, w = self.config.canvas
        if images.ndim != 4 or images.shape[1] != 3:
            raise ShapeError(f"expected images of shape (B, 3, H, W), got {tuple(images.shape)}")
        if tuple(images.shape[2:]) != (h, w):
            raise ShapeError(f"expected canvas {h}x{w}, got {tuple(images.shape[2:])}")
        x = self.patch_embed(images).permute(0, 2, 3, 1)
        x = self.embed_norm(x)
        for i, stage in enumerate(self.stages):
            x = stage(x)
            if i < len(self.merges):
                x = self.merges[i](x)
        b, fh, fw, c = x.shape
        z = self.norm(x.flatten(1, 2))
        if self.memory_position:
            z = z + sinusoid_2d(fh, fw, c).to(z.dtype)
        return z
