"""Advection-based neural ODE forecasting on latitude-longitude grids.

A learned initial velocity transports the fields through a discretized
advection equation, a learned model evolves the velocity, and a learned
source term corrects the rollout afterwards.
"""

from .datasets import (SynthConfig, TrajectoryDataset, VariableCatalog, extract_region,
                       fit_norm_stats, get_region, make_synthetic_dataset)
from .dynamics import SolverConfig, forecast, integrate
from .embeddings import spatial_encoding, spatiotemporal_embedding, temporal_encoding
from .errors import (AdvectionODEError, ConfigError, DataError, DomainError, IntegrationError,
                     LossError, ModelError, ShapeError, UndefinedScoreError)
from .evaluation import ScoreReport, acc, climatology, flexible_inference, persistence_baseline, rmse
from .grid import GridSpec, advection_tendency, divergence, latitude_weights, spatial_gradient
from .models import BundleConfig, ModelBundle, load_checkpoint, save_checkpoint
from .training import LossConfig, OptimConfig, multi_task_loss, stability_matrix, train

__version__ = "0.1.0"
