"""Initial-velocity estimator: (u0, grad u0 [, du/dt]) -> v0 with 2K channels."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from ..errors import ConfigError, ModelError
from .layers import PatchTransformer, ResNet, ResNetConfig, ViTConfig

# input plans of the velocity-input ablation
INPUT_PLANS = ("dt", "u+grad+dt", "u", "grad", "u+grad")


@dataclass
class VelocityModelConfig:
    arch: str = "resnet"
    plan: str = "u+grad"
    resnet: ResNetConfig = field(default_factory=ResNetConfig)
    vit: ViTConfig = field(default_factory=ViTConfig)

    def __post_init__(self):
        if self.arch not in ("resnet", "vit"):
            raise ConfigError(f"unknown velocity arch {self.arch!r}", "model.velocity.arch")
        if self.plan not in INPUT_PLANS:
            raise ConfigError(f"unknown input plan {self.plan!r}; choose from {INPUT_PLANS}",
                              "model.velocity.plan")

    @property
    def uses_dt(self):
        return "dt" in self.plan.split("+")

    def in_channels(self, k):
        per = {"u": k, "grad": 2 * k, "dt": k}
        return sum(per[p] for p in self.plan.split("+"))


class VelocityModel(nn.Module):
    def __init__(self, channels, height, width, cfg: VelocityModelConfig, modes):
        super().__init__()
        self.cfg = cfg
        cin, cout = cfg.in_channels(channels), 2 * channels
        if cfg.arch == "resnet":
            self.net = ResNet(cin, cout, cfg.resnet, dims=2, modes=modes)
        else:
            self.net = PatchTransformer(cin, cout, height, width, cfg.vit)

    def forward(self, u0, grad_u0, dudt=None):
        parts = {"u": u0, "grad": grad_u0, "dt": dudt}
        inputs = []
        for name in self.cfg.plan.split("+"):
            if parts[name] is None:
                raise ModelError(f"velocity plan {self.cfg.plan!r} needs input {name!r}")
            if not torch.isfinite(parts[name]).all():
                raise ModelError(f"non-finite values in velocity input {name!r}")
            inputs.append(parts[name])
        return self.net(torch.cat(inputs, dim=-3))
