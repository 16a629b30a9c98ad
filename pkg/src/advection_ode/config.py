"""Experiment configuration: file + environment + flags, validated up front."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .datasets import SPLIT_YEARS, SynthConfig, get_region
from .dynamics import SolverConfig
from .errors import ConfigError
from .models import AdvectionModelConfig, SourceModelConfig, VelocityModelConfig
from .serialization import from_dict, to_dict
from .training import LossConfig, OptimConfig

SEED_ENV = "ADVODE_SEED"
DATA_KINDS = ("synthetic", "era5", "files")
STUDIES = ("velocity-inputs", "source-arch", "dt-interval", "stability")


@dataclass
class DataConfig:
    kind: str = "synthetic"
    lead: int | None = None            # trajectory length N; None: synth.lead
    synth: SynthConfig = field(default_factory=SynthConfig)
    val_samples: int = 32
    test_samples: int = 64
    era5_path: str | None = None
    variables: list | None = None      # catalog keys; None = full ERA5 catalog
    splits: dict = field(default_factory=lambda: {k: list(v) for k, v in SPLIT_YEARS.items()})
    stride: int = 1
    train_path: str | None = None      # NetCDF trajectory files for kind=files
    val_path: str | None = None
    test_path: str | None = None

    def __post_init__(self):
        if self.kind not in DATA_KINDS:
            raise ConfigError(f"unknown data kind {self.kind!r}", "data.kind")
        if self.kind == "era5" and not self.era5_path:
            raise ConfigError("era5_path is required for kind=era5", "data.era5_path")
        if self.kind == "files" and not self.train_path and not self.test_path:
            raise ConfigError("train_path or test_path is required for kind=files", "data.train_path")
        if self.val_samples < 0 or self.test_samples < 0:
            raise ConfigError("sample counts must be >= 0", "data.val_samples")
        if self.lead is not None and self.lead < 1:
            raise ConfigError("lead must be >= 1", "data.lead")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1", "data.stride")


@dataclass
class ModelConfig:
    velocity: VelocityModelConfig = field(default_factory=VelocityModelConfig)
    advection: AdvectionModelConfig = field(default_factory=AdvectionModelConfig)
    source: SourceModelConfig = field(default_factory=SourceModelConfig)
    dtype: str = "float32"

    def __post_init__(self):
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64", "model.dtype")


@dataclass
class EvalConfig:
    weighted_numerator: bool = True
    batch_size: int = 32


@dataclass
class AblateConfig:
    seeds: list = field(default_factory=lambda: [0])
    plans: list | None = None          # velocity-inputs: subset of plans
    archs: list | None = None          # source-arch: subset of source architectures
    max_runs: int | None = None        # stability: first n reference runs
    dts: list = field(default_factory=lambda: [1, 2, 3, 6, 12, 24])

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required", "ablate.seeds")
        if self.max_runs is not None and self.max_runs < 1:
            raise ConfigError("max_runs must be >= 1", "ablate.max_runs")
        if any(d <= 0 for d in self.dts):
            raise ConfigError("dts must be positive", "ablate.dts")


@dataclass
class ExperimentConfig:
    name: str = "advection-ode"
    seed: int = 0
    out: str = "runs/default"
    region: str | None = None
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    optim: OptimConfig = field(default_factory=OptimConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)

    def __post_init__(self):
        if self.region is not None:
            get_region(self.region)

    @property
    def lead(self):
        return self.data.lead or self.data.synth.lead

    def to_dict(self):
        return to_dict(self)

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha1(blob).hexdigest()[:10]

    @property
    def run_id(self):
        return f"{self.name}-{self.fingerprint()}"

    def snapshot(self, directory):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "config.json").write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return d / "config.json"


def parse_override(text):
    """``a.b.c=value`` -> (["a", "b", "c"], parsed value). Values parse as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key.path=value")
    key, raw = text.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"override {text!r} has an empty key")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        value = raw
    return parts, value


def apply_override(data: dict, parts, value):
    node = data
    for i, p in enumerate(parts[:-1]):
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        if not isinstance(nxt, dict):
            raise ConfigError("cannot descend into a non-mapping", ".".join(parts[:i + 1]))
        node = nxt
    node[parts[-1]] = value


def read_config_file(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {path}", "--config")
    try:
        data = yaml.safe_load(p.read_text())  # JSON is a subset of YAML
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}", "--config") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping", "--config")
    return data


def load_config(path=None, overrides=(), seed=None, out=None, region=None, lead=None, env=None):
    """Merge file < environment seed < flags, then validate everything.

    The experiment seed drives the model, optimizer and synthetic-data
    seeds unless those are overridden explicitly.
    """
    env = os.environ if env is None else env
    data = read_config_file(path) if path else {}
    data = copy.deepcopy(data)
    if env.get(SEED_ENV):
        try:
            data["seed"] = int(env[SEED_ENV])
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer", SEED_ENV) from None
    explicit = set()
    for text in overrides:
        parts, value = parse_override(text)
        apply_override(data, parts, value)
        explicit.add(".".join(parts))
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["out"] = out
    if region is not None:
        data["region"] = region
    if lead is not None:
        apply_override(data, ["data", "lead"], lead)
    cfg = from_dict(ExperimentConfig, data)
    file_keys = _flat_keys(read_config_file(path)) if path else set()
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer", "seed")
    for key in ("optim.seed", "data.synth.seed"):
        if key not in explicit and key not in file_keys:
            _set(cfg, key, cfg.seed)
    return cfg


def _flat_keys(d, prefix=""):
    out = set()
    for k, v in d.items():
        key = f"{prefix}{k}"
        out.add(key)
        if isinstance(v, dict):
            out |= _flat_keys(v, key + ".")
    return out


def _set(cfg, dotted, value):
    *head, last = dotted.split(".")
    obj = cfg
    for h in head:
        obj = getattr(obj, h)
    setattr(obj, last, value)
