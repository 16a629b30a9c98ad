from .advection import AdvectionModel, AdvectionModelConfig
from .bundle import BundleConfig, ModelBundle, load_checkpoint, save_checkpoint
from .layers import DESK_LADDER, ResNetConfig, ViTConfig
from .source import SOURCE_ARCHS, SourceModel, SourceModelConfig
from .velocity import INPUT_PLANS, VelocityModel, VelocityModelConfig

__all__ = [
    "AdvectionModel", "AdvectionModelConfig", "BundleConfig", "ModelBundle",
    "load_checkpoint", "save_checkpoint", "DESK_LADDER", "ResNetConfig", "ViTConfig",
    "SOURCE_ARCHS", "SourceModel", "SourceModelConfig", "INPUT_PLANS",
    "VelocityModel", "VelocityModelConfig",
]
