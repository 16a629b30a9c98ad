"""Building blocks: grid-aware convolutions, residual stacks, patch attention."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..errors import ConfigError

# (count, hidden width) pairs; the full-size ladder divided by 8
DESK_LADDER = ((5, 64), (5, 16), (3, 8), (2, 6))


@dataclass
class ResNetConfig:
    kernel: int = 3
    padding: int = 1
    stride: int = 1
    dropout: float = 0.1
    slope: float = 0.3
    ladder: tuple = DESK_LADDER

    def __post_init__(self):
        self.ladder = tuple(tuple(int(x) for x in pair) for pair in self.ladder)
        if self.kernel % 2 == 0 or self.padding != self.kernel // 2 or self.stride != 1:
            raise ConfigError("residual stacks need odd kernel, padding = kernel // 2, stride 1", "resnet")
        if not self.ladder or any(c < 1 or w < 1 for c, w in self.ladder):
            raise ConfigError("ladder needs positive (count, width) pairs", "resnet.ladder")


@dataclass
class ViTConfig:
    patch: int = 2
    hidden: int = 128
    depth: int = 2
    heads: int = 8
    mlp_ratio: float = 4.0
    decoder_depth: int = 2
    drop_path: float = 0.1
    dropout: float = 0.1

    def __post_init__(self):
        if self.hidden % self.heads:
            raise ConfigError("hidden must be divisible by heads", "vit.hidden")
        if self.patch < 1 or self.depth < 0 or self.decoder_depth < 1:
            raise ConfigError("invalid patch/depth/decoder_depth", "vit")


def pad_grid(x, p, lat_mode="replicate", lon_mode="circular"):
    """Pad the last two axes by ``p`` cells.

    ``circular`` wraps, ``replicate`` repeats the edge row/column and
    ``reflect`` mirrors without repeating the edge.
    """
    if p == 0:
        return x

    def pad_axis(t, axis, mode):
        n = t.shape[axis]
        if mode == "circular":
            lo, hi = t.narrow(axis, n - p, p), t.narrow(axis, 0, p)
        elif mode == "reflect":
            lo = t.narrow(axis, 1, p).flip(axis)
            hi = t.narrow(axis, n - 1 - p, p).flip(axis)
        else:
            lo = t.narrow(axis, 0, 1).expand(*[p if a == axis % t.dim() else s for a, s in enumerate(t.shape)])
            hi = t.narrow(axis, n - 1, 1).expand(*[p if a == axis % t.dim() else s for a, s in enumerate(t.shape)])
        return torch.cat([lo, t, hi], dim=axis)

    x = pad_axis(x, -1, lon_mode)
    return pad_axis(x, -2, lat_mode)


def boundary_modes(lat_boundary, lon_boundary):
    conv = {"periodic": "circular", "clamp": "replicate", "reflect": "reflect"}
    return conv[lat_boundary], conv[lon_boundary]


class GridConv(nn.Module):
    """Conv2d/Conv3d whose spatial padding follows the grid's boundary rules.

    For 3-D convolutions the leading (time) axis is zero-padded.
    """

    def __init__(self, cin, cout, kernel, dims=2, modes=("replicate", "circular")):
        super().__init__()
        self.p = kernel // 2
        self.dims = dims
        self.modes = modes
        conv = nn.Conv2d if dims == 2 else nn.Conv3d
        self.conv = conv(cin, cout, kernel, padding=0)

    def forward(self, x):
        x = pad_grid(x, self.p, *self.modes)
        if self.dims == 3 and self.p:
            x = F.pad(x, (0, 0, 0, 0, self.p, self.p))
        return self.conv(x)


class ResBlock(nn.Module):
    def __init__(self, cin, cout, cfg: ResNetConfig, dims, modes):
        super().__init__()
        self.conv1 = GridConv(cin, cout, cfg.kernel, dims, modes)
        self.conv2 = GridConv(cout, cout, cfg.kernel, dims, modes)
        self.act = nn.LeakyReLU(cfg.slope)
        self.drop = nn.Dropout(cfg.dropout)
        conv = nn.Conv2d if dims == 2 else nn.Conv3d
        self.shortcut = conv(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x):
        h = self.conv1(self.act(x))
        h = self.conv2(self.drop(self.act(h)))
        return h + self.shortcut(x)


class ResNet(nn.Module):
    """Stem conv, residual ladder, output conv. ``dims`` is 2 or 3."""

    def __init__(self, cin, cout, cfg: ResNetConfig, dims=2, modes=("replicate", "circular")):
        super().__init__()
        width = cfg.ladder[0][1]
        self.stem = GridConv(cin, width, cfg.kernel, dims, modes)
        blocks = []
        for count, w in cfg.ladder:
            for _ in range(count):
                blocks.append(ResBlock(width, w, cfg, dims, modes))
                width = w
        self.blocks = nn.Sequential(*blocks)
        self.act = nn.LeakyReLU(cfg.slope)
        self.head = GridConv(width, cout, cfg.kernel, dims, modes)

    def forward(self, x):
        return self.head(self.act(self.blocks(self.stem(x))))


class DropPath(nn.Module):
    def __init__(self, p=0.0):
        super().__init__()
        self.p = p

    def forward(self, x):
        if self.p == 0.0 or not self.training:
            return x
        keep = 1.0 - self.p
        mask = x.new_empty((x.shape[0],) + (1,) * (x.dim() - 1)).bernoulli_(keep)
        return x * mask / keep


class Attention(nn.Module):
    def __init__(self, dim, heads, dropout=0.0):
        super().__init__()
        self.heads = heads
        self.scale = (dim // heads) ** -0.5
        self.qkv = nn.Linear(dim, 3 * dim)
        self.proj = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        B, T, D = x.shape
        q, k, v = self.qkv(x).reshape(B, T, 3, self.heads, D // self.heads).permute(2, 0, 3, 1, 4)
        attn = torch.softmax((q @ k.transpose(-2, -1)) * self.scale, dim=-1)
        out = (self.drop(attn) @ v).transpose(1, 2).reshape(B, T, D)
        return self.drop(self.proj(out))


class Block(nn.Module):
    def __init__(self, dim, heads, mlp_ratio, dropout, drop_path):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = Attention(dim, heads, dropout)
        self.norm2 = nn.LayerNorm(dim)
        hidden = int(dim * mlp_ratio)
        self.mlp = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Dropout(dropout),
                                 nn.Linear(hidden, dim), nn.Dropout(dropout))
        self.drop_path = DropPath(drop_path)

    def forward(self, x):
        x = x + self.drop_path(self.attn(self.norm1(x)))
        return x + self.drop_path(self.mlp(self.norm2(x)))


class PatchTransformer(nn.Module):
    """Patch-attention network mapping (B, C, H, W) to (B, cout, H, W).

    With ``time_dim`` set, the input is (B, N, C, H, W) plus a per-step
    conditioning vector; tokens of all N steps attend to each other.
    """

    def __init__(self, cin, cout, height, width, cfg: ViTConfig, time_dim=None):
        super().__init__()
        p = cfg.patch
        if height % p or width % p:
            raise ConfigError(f"grid {height}x{width} not divisible by patch size {p}", "vit.patch")
        self.p, self.cout = p, cout
        self.grid = (height // p, width // p)
        n_tokens = self.grid[0] * self.grid[1]
        D = cfg.hidden
        self.patch_embed = nn.Conv2d(cin, D, p, stride=p)
        self.pos_embed = nn.Parameter(torch.zeros(1, n_tokens, D))
        self.time_embed = nn.Linear(time_dim, D) if time_dim else None
        dpr = torch.linspace(0, cfg.drop_path, max(cfg.depth, 1)).tolist()
        self.blocks = nn.ModuleList(
            Block(D, cfg.heads, cfg.mlp_ratio, cfg.dropout, dpr[i]) for i in range(cfg.depth))
        self.norm = nn.LayerNorm(D)
        head = []
        for _ in range(cfg.decoder_depth - 1):
            head += [nn.Linear(D, D), nn.GELU()]
        head.append(nn.Linear(D, cout * p * p))
        self.head = nn.Sequential(*head)
        nn.init.trunc_normal_(self.pos_embed, std=0.02)

    def _unpatchify(self, x):
        B = x.shape[0]
        gh, gw = self.grid
        x = x.reshape(B, gh, gw, self.p, self.p, self.cout)
        return torch.einsum("bhwpqc->bchpwq", x).reshape(B, self.cout, gh * self.p, gw * self.p)

    def forward(self, x, cond=None):
        if self.time_embed is None:
            tok = self.patch_embed(x).flatten(2).transpose(1, 2) + self.pos_embed
            for blk in self.blocks:
                tok = blk(tok)
            return self._unpatchify(self.head(self.norm(tok)))
        B, N = x.shape[:2]
        tok = self.patch_embed(x.flatten(0, 1)).flatten(2).transpose(1, 2)
        tok = tok.reshape(B, N, -1, tok.shape[-1]) + self.pos_embed[:, None]
        tok = tok + self.time_embed(cond)[:, :, None, :]
        tok = tok.flatten(1, 2)
        for blk in self.blocks:
            tok = blk(tok)
        out = self.head(self.norm(tok)).reshape(B * N, -1, self.cout * self.p * self.p)
        return self._unpatchify(out).reshape(B, N, self.cout, *x.shape[-2:])
