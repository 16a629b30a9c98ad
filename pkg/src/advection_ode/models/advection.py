"""Learned velocity tendency: attention (or conv) body plus a linear term."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from ..embeddings import N_EMBEDDING
from ..errors import ConfigError, ModelError
from .layers import PatchTransformer, ResNet, ResNetConfig, ViTConfig


@dataclass
class AdvectionModelConfig:
    arch: str = "vit"
    linear: bool = True
    vit: ViTConfig = field(default_factory=ViTConfig)
    resnet: ResNetConfig = field(default_factory=ResNetConfig)

    def __post_init__(self):
        if self.arch not in ("vit", "resnet"):
            raise ConfigError(f"unknown advection arch {self.arch!r}", "model.advection.arch")


class AdvectionModel(nn.Module):
    """v_dot = body(x) + W x, with x = [u, grad u, v, embedding] per cell.

    The linear term is a 1x1 convolution (a per-cell linear map). The
    34-channel embedding is concatenated as input channels.
    """

    def __init__(self, channels, height, width, cfg: AdvectionModelConfig, modes):
        super().__init__()
        self.cfg = cfg
        cin = 5 * channels + N_EMBEDDING
        cout = 2 * channels
        if cfg.arch == "vit":
            self.body = PatchTransformer(cin, cout, height, width, cfg.vit)
        else:
            self.body = ResNet(cin, cout, cfg.resnet, dims=2, modes=modes)
        self.linear = nn.Conv2d(cin, cout, 1) if cfg.linear else None
        self.body_enabled = True

    def forward(self, u, grad_u, v, embedding):
        x = torch.cat([u, grad_u, v, embedding.expand(u.shape[0], *embedding.shape[-3:])], dim=-3)
        if not torch.isfinite(x).all():
            raise ModelError("non-finite values in advection model input")
        out = self.body(x) if self.body_enabled else 0.0
        if self.linear is not None:
            out = out + self.linear(x)
        return out
