"""The three learned components packaged together, plus checkpoint I/O."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from ..errors import ConfigError, ModelError
from ..serialization import from_dict, to_dict
from .advection import AdvectionModel, AdvectionModelConfig
from .layers import boundary_modes
from .source import SourceModel, SourceModelConfig
from .velocity import VelocityModel, VelocityModelConfig


@dataclass
class BundleConfig:
    channels: int = 2
    height: int = 16
    width: int = 32
    lat_boundary: str = "periodic"
    lon_boundary: str = "periodic"
    velocity: VelocityModelConfig = field(default_factory=VelocityModelConfig)
    advection: AdvectionModelConfig = field(default_factory=AdvectionModelConfig)
    source: SourceModelConfig = field(default_factory=SourceModelConfig)
    seed: int = 0

    def __post_init__(self):
        if self.channels < 1 or self.height < 2 or self.width < 2:
            raise ConfigError("channels >= 1 and a grid of at least 2x2 required", "model")

    @classmethod
    def for_grid(cls, grid, channels, **kw):
        return cls(channels=channels, height=grid.height, width=grid.width,
                   lat_boundary=grid.lat_boundary, lon_boundary=grid.lon_boundary, **kw)


class ModelBundle(nn.Module):
    """Velocity estimator, advection model and source model.

    Parameters are drawn from a private generator seeded with ``cfg.seed``,
    so construction never disturbs the global torch RNG.
    """

    def __init__(self, cfg: BundleConfig, dtype=torch.float32):
        super().__init__()
        self.cfg = cfg
        modes = boundary_modes(cfg.lat_boundary, cfg.lon_boundary)
        args = (cfg.channels, cfg.height, cfg.width)
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self.velocity = VelocityModel(*args, cfg.velocity, modes)
            self.advection = AdvectionModel(*args, cfg.advection, modes)
            self.source = SourceModel(*args, cfg.source, modes)
        self.to(dtype)
        for name, p in self.named_parameters():
            if not torch.isfinite(p).all():
                raise ModelError(f"non-finite initial parameter {name}")

    def param_groups(self):
        """Names of parameters in the advection model vs. everything else."""
        adv = [n for n, _ in self.named_parameters() if n.startswith("advection.")]
        rest = [n for n, _ in self.named_parameters() if not n.startswith("advection.")]
        return adv, rest


def save_checkpoint(path, bundle: ModelBundle, **extra):
    payload = {
        "state_dict": bundle.state_dict(),
        "config": to_dict(bundle.cfg),
        "seed": bundle.cfg.seed,
        "dtype": str(next(bundle.parameters()).dtype).replace("torch.", ""),
    }
    payload.update(extra)
    torch.save(payload, path)


def load_checkpoint(path):
    """Returns (bundle, payload). The bundle reproduces saved forward outputs."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    cfg = from_dict(BundleConfig, payload["config"], "checkpoint.config")
    bundle = ModelBundle(cfg, dtype=getattr(torch, payload.get("dtype", "float32")))
    bundle.load_state_dict(payload["state_dict"])
    return bundle, payload
