"""Source model: corrections {s(t_n)} computed from the whole rollout.

Time-aware variants (``resnet3d``, ``dit``) see every step at once and the
temporal encodings of t_n and t_0; ``resnet2d`` and ``vit`` treat each step
independently without time information; ``none`` returns zeros.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from ..embeddings import N_SPATIAL, N_TEMPORAL, temporal_encoding
from ..errors import ConfigError, ModelError
from .layers import PatchTransformer, ResNet, ResNetConfig, ViTConfig

SOURCE_ARCHS = ("resnet3d", "dit", "resnet2d", "vit", "none")
TIME_AWARE = ("resnet3d", "dit")


@dataclass
class SourceModelConfig:
    arch: str = "resnet3d"
    resnet: ResNetConfig = field(default_factory=ResNetConfig)
    vit: ViTConfig = field(default_factory=ViTConfig)

    def __post_init__(self):
        if self.arch not in SOURCE_ARCHS:
            raise ConfigError(f"unknown source arch {self.arch!r}; choose from {SOURCE_ARCHS}",
                              "model.source.arch")

    @property
    def time_aware(self):
        return self.arch in TIME_AWARE


class SourceModel(nn.Module):
    def __init__(self, channels, height, width, cfg: SourceModelConfig, modes):
        super().__init__()
        self.cfg = cfg
        self.channels = channels
        cin = 4 * channels + N_SPATIAL + (2 * N_TEMPORAL if cfg.arch == "resnet3d" else 0)
        if cfg.arch == "resnet3d":
            self.net = ResNet(cin, channels, cfg.resnet, dims=3, modes=modes)
        elif cfg.arch == "resnet2d":
            self.net = ResNet(cin, channels, cfg.resnet, dims=2, modes=modes)
        elif cfg.arch == "vit":
            self.net = PatchTransformer(cin, channels, height, width, cfg.vit)
        elif cfg.arch == "dit":
            self.net = PatchTransformer(cin, channels, height, width, cfg.vit, time_dim=2 * N_TEMPORAL)
        else:
            self.net = None

    def forward(self, traj, u0, v0, phi_s, times_days, t0_days):
        """traj (B, N, K, H, W) -> s (B, N, K, H, W).

        ``times_days`` is (B, N) absolute times of the steps, ``t0_days`` (B,).
        """
        B, N = traj.shape[:2]
        finite = torch.isfinite(traj).flatten(2).all(-1)
        if not finite.all():
            step = int(torch.nonzero(~finite)[0, 1]) + 1
            raise ModelError(f"non-finite trajectory at step {step}")
        if self.net is None:
            return torch.zeros_like(traj)
        H, W = traj.shape[-2:]
        cond = torch.cat([u0, v0, phi_s.to(traj).expand(B, *phi_s.shape)], dim=1)
        x = torch.cat([traj, cond[:, None].expand(B, N, *cond.shape[1:])], dim=2)
        if self.cfg.arch == "resnet3d":
            te = torch.cat([temporal_encoding(times_days, traj.dtype),
                            temporal_encoding(t0_days, traj.dtype)[:, None].expand(B, N, N_TEMPORAL)], -1)
            x = torch.cat([x, te[..., None, None].expand(B, N, 2 * N_TEMPORAL, H, W)], dim=2)
            return self.net(x.transpose(1, 2)).transpose(1, 2)
        if self.cfg.arch == "dit":
            te = torch.cat([temporal_encoding(times_days, traj.dtype),
                            temporal_encoding(t0_days, traj.dtype)[:, None].expand(B, N, N_TEMPORAL)], -1)
            return self.net(x, te)
        out = self.net(x.flatten(0, 1))
        return out.reshape(B, N, self.channels, H, W)
