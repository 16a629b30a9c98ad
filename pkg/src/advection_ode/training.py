"""Multi-step latitude-weighted training and the stability harness."""

from __future__ import annotations

import copy
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import torch

from .datasets import NormStats, TrajectoryDataset, fit_norm_stats, normalize
from .dynamics import SolverConfig, forecast
from .errors import ConfigError, IntegrationError, LossError, ModelError
from .grid import latitude_weights
from .models import BundleConfig, ModelBundle
from .serialization import to_dict

log = logging.getLogger(__name__)


@dataclass
class LossConfig:
    channels: list | None = None  # channel keys; None means all
    steps: list | None = None     # supervised lead indices (1-based); None means 1..N

    def __post_init__(self):
        if self.steps is not None and not self.steps:
            raise ConfigError("supervised steps must be nonempty", "loss.steps")


@dataclass
class OptimConfig:
    lr: float = 5e-4
    advection_lr: float = 1e-4
    weight_decay: float = 1e-5
    betas: tuple = (0.9, 0.999)
    warmup_steps: int | None = None  # None: 10% of the run
    start_lr: float = 1e-8
    min_lr: float = 1e-8
    epochs: int = 1
    max_steps: int | None = None
    batch_size: int = 8
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.lr < 0 or self.advection_lr < 0:
            raise ConfigError("learning rates must be non-negative", "optim.lr")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1", "optim.batch_size")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0", "optim.epochs")


def multi_task_loss(pred, target, weights):
    """Mean over (steps, channels, rows, cols) of alpha(h) * squared error.

    Leading batch axes are averaged too. ``weights`` has one entry per row.
    """
    if pred.shape != target.shape:
        raise LossError(f"prediction shape {tuple(pred.shape)} != target {tuple(target.shape)}")
    w = torch.as_tensor(weights, dtype=pred.dtype, device=pred.device)
    if w.shape != (pred.shape[-2],):
        raise LossError(f"weights need {pred.shape[-2]} entries, got {tuple(w.shape)}")
    return (w[:, None] * (pred - target) ** 2).mean()


def lr_schedule(step, total_steps, warmup_steps, peak, start=1e-8, floor=1e-8):
    """Linear warmup from ``start`` to ``peak`` then cosine decay to ``floor``."""
    if peak == 0:
        return 0.0
    if step < warmup_steps:
        return start + (peak - start) * step / warmup_steps
    decay = max(total_steps - warmup_steps, 1)
    frac = min(max(step - warmup_steps, 0) / decay, 1.0)
    return floor + (peak - floor) * 0.5 * (1.0 + math.cos(math.pi * frac))


def make_optimizer(bundle: ModelBundle, cfg: OptimConfig):
    """AdamW with advection / other groups; positional embeddings get no decay."""
    groups = {}
    for name, p in bundle.named_parameters():
        comp = "advection" if name.startswith("advection.") else "base"
        decay = "pos_embed" not in name
        groups.setdefault((comp, decay), []).append((name, p))
    param_groups = []
    for (comp, decay), items in sorted(groups.items()):
        param_groups.append({
            "params": [p for _, p in items],
            "names": [n for n, _ in items],
            "component": comp,
            "peak": cfg.advection_lr if comp == "advection" else cfg.lr,
            "weight_decay": cfg.weight_decay if decay else 0.0,
            "lr": 0.0,
        })
    return torch.optim.AdamW(param_groups, betas=cfg.betas)


@dataclass
class TrainResult:
    bundle: ModelBundle
    history: list
    stats: NormStats
    steps: int
    nan_epoch: int | None = None
    nan_step: int | None = None
    best_val_loss: float | None = None
    final_train_loss: float | None = None
    optimizer_state: dict | None = None


def _tensors(ds: TrajectoryDataset, stats, dtype):
    t = lambda a: torch.as_tensor(normalize(a, stats), dtype=dtype)
    hist = None if ds.history is None else t(ds.history)
    return t(ds.inputs), t(ds.targets), torch.as_tensor(ds.t0 / 24.0, dtype=torch.float64), hist


def _channel_index(catalog, channels):
    if channels is None:
        return None
    try:
        return [catalog.index(c) for c in channels]
    except ValueError as e:
        raise ConfigError(str(e), "loss.channels") from None


def batch_loss(bundle, grid, batch, weights, solver, loss_cfg, chan_idx, history_dt):
    u0, tgt, t0d, hist = batch
    fc = forecast(bundle, grid, u0, tgt.shape[1], solver, t0d, hist, history_dt)
    if fc.nan_step is not None:
        raise IntegrationError("rollout produced non-finite values", step=fc.nan_step)
    pred = fc.u
    if loss_cfg.steps is not None:
        idx = [s - 1 for s in loss_cfg.steps]
        pred, tgt = pred[:, idx], tgt[:, idx]
    if chan_idx is not None:
        pred, tgt = pred[:, :, chan_idx], tgt[:, :, chan_idx]
    return multi_task_loss(pred, tgt, weights)


def evaluate_loss(bundle, ds, stats, solver=None, loss_cfg=None, batch_size=32):
    """Multi-task loss over a dataset in eval mode (normalized units)."""
    solver = solver or SolverConfig()
    loss_cfg = loss_cfg or LossConfig()
    dtype = next(bundle.parameters()).dtype
    u0, tgt, t0d, hist = _tensors(ds, stats, dtype)
    weights = torch.as_tensor(latitude_weights(ds.grid), dtype=dtype)
    chan_idx = _channel_index(ds.catalog, loss_cfg.channels)
    was = bundle.training
    bundle.eval()
    total = 0.0
    try:
        with torch.no_grad():
            for s in range(0, len(ds), batch_size):
                sl = slice(s, s + batch_size)
                b = (u0[sl], tgt[sl], t0d[sl], None if hist is None else hist[sl])
                n = u0[sl].shape[0]
                total += float(batch_loss(bundle, ds.grid, b, weights, solver, loss_cfg,
                                          chan_idx, ds.history_dt)) * n
    finally:
        bundle.train(was)
    return total / len(ds)


def train(dataset: TrajectoryDataset, bundle: ModelBundle, optim: OptimConfig | None = None,
          loss_cfg: LossConfig | None = None, solver: SolverConfig | None = None,
          val_dataset: TrajectoryDataset | None = None, stats: NormStats | None = None,
          start_step: int = 0, optimizer_state=None, on_step=None, select_best=True):
    """One-stage training of velocity, advection and source models together.

    Samples are shuffled per epoch with ``optim.seed`` and each sample is
    used once per epoch. A non-finite loss or rollout stops training and is
    reported through ``nan_epoch``/``nan_step`` rather than raised.
    With a validation set the returned bundle holds the parameters of the
    epoch with the lowest validation loss.
    """
    optim = optim or OptimConfig()
    loss_cfg = loss_cfg or LossConfig()
    solver = solver or SolverConfig()
    if len(dataset) == 0:
        raise ConfigError("training dataset is empty", "data")
    stats = stats or dataset.stats or fit_norm_stats(dataset)
    dtype = next(bundle.parameters()).dtype
    u0, tgt, t0d, hist = _tensors(dataset, stats, dtype)
    weights = torch.as_tensor(latitude_weights(dataset.grid), dtype=dtype)
    chan_idx = _channel_index(dataset.catalog, loss_cfg.channels)

    n_batches = math.ceil(len(dataset) / optim.batch_size)
    total = optim.epochs * n_batches
    if optim.max_steps is not None:
        total = min(total, optim.max_steps) if optim.epochs else optim.max_steps
        epochs = math.ceil(total / n_batches)
    else:
        epochs = optim.epochs
    warmup = optim.warmup_steps if optim.warmup_steps is not None else max(1, total // 10)

    opt = make_optimizer(bundle, optim)
    if optimizer_state is not None:
        opt.load_state_dict(optimizer_state)
    history = []

    def emit(rec):
        history.append(rec)
        if on_step is not None:
            on_step(rec, opt)

    result = TrainResult(bundle, history, stats, start_step)
    best_state, best_val = None, None
    step = start_step
    torch.manual_seed(optim.seed)
    bundle.train()
    for epoch in range(1, epochs + 1):
        order = np.random.default_rng(optim.seed + epoch).permutation(len(dataset))
        for b in range(n_batches):
            if step >= start_step + total:
                break
            for g in opt.param_groups:
                g["lr"] = lr_schedule(step - start_step, total, warmup, g["peak"], optim.start_lr, optim.min_lr)
            idx = torch.as_tensor(order[b * optim.batch_size:(b + 1) * optim.batch_size])
            batch = (u0[idx], tgt[idx], t0d[idx], None if hist is None else hist[idx])
            try:
                loss = batch_loss(bundle, dataset.grid, batch, weights, solver, loss_cfg,
                                  chan_idx, dataset.history_dt)
                if not torch.isfinite(loss):
                    raise IntegrationError("non-finite loss")
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()
            except (IntegrationError, ModelError) as e:
                log.warning("training diverged at epoch %d step %d: %s", epoch, step, e)
                result.nan_epoch, result.nan_step = epoch, step
                emit({"step": step, "epoch": epoch, "event": "nan"})
                result.steps = step
                return result
            rec = {"step": step, "epoch": epoch, "loss": float(loss.detach())}
            for g in opt.param_groups:
                rec["lr_" + g["component"]] = g["lr"]
            emit(rec)
            step += 1
        if val_dataset is not None and len(val_dataset):
            try:
                val = evaluate_loss(bundle, val_dataset, stats, solver, loss_cfg)
            except (IntegrationError, ModelError):
                val = float("nan")
            emit({"step": step, "epoch": epoch, "val_loss": val})
            if not np.isfinite(val):
                result.nan_epoch, result.nan_step = epoch, step
                break
            if best_val is None or val < best_val:
                best_val = val
                best_state = copy.deepcopy(bundle.state_dict())
    if select_best and best_state is not None:
        bundle.load_state_dict(best_state)
    result.steps = step
    result.best_val_loss = best_val
    result.optimizer_state = opt.state_dict()
    losses = [h["loss"] for h in history if "loss" in h]
    result.final_train_loss = losses[-1] if losses else None
    return result


# ---------------------------------------------------------------------------
# stability matrix
# ---------------------------------------------------------------------------

@dataclass
class StabilityRecord:
    velocity_arch: str
    advection_arch: str
    source_arch: str
    lr: float
    advection_lr: float
    outcome: str              # "stable" or "nan"
    nan_epoch: int | None
    final_val_loss: float | None
    rank: int | None = None

    def to_dict(self):
        return asdict(self)


# Velocity / advection / source architecture triples and (lr, advection lr)
# pairs of the reference stability table.
REFERENCE_STABILITY_RUNS = [
    (("resnet", "vit", "resnet3d"), (5e-4, 5e-4)),
    (("vit", "vit", "resnet3d"), (5e-4, 5e-4)),
    (("resnet", "vit", "dit"), (5e-4, 5e-4)),
    (("vit", "vit", "dit"), (5e-4, 5e-4)),
    (("resnet", "resnet", "resnet3d"), (5e-4, 5e-4)),
    (("vit", "resnet", "resnet3d"), (5e-4, 5e-4)),
    (("resnet", "resnet", "dit"), (5e-4, 5e-4)),
    (("vit", "resnet", "dit"), (5e-4, 5e-4)),
    (("resnet", "resnet", "resnet3d"), (5e-4, 5e-5)),
    (("vit", "resnet", "dit"), (5e-4, 5e-5)),
    (("vit", "resnet", "dit"), (5e-4, 5e-6)),
]


def rank_records(records):
    """Assign ranks 1..n to stable runs by ascending validation loss."""
    stable = [r for r in records if r.outcome == "stable" and r.final_val_loss is not None]
    for i, r in enumerate(sorted(stable, key=lambda r: r.final_val_loss), start=1):
        r.rank = i
    return records


def stability_matrix(train_ds, val_ds, runs, base_cfg: BundleConfig, optim: OptimConfig,
                     solver: SolverConfig | None = None, loss_cfg: LossConfig | None = None,
                     dtype=torch.float32):
    """Train every (architecture triple, rate pair) under identical data and seed."""
    records = []
    stats = train_ds.stats or fit_norm_stats(train_ds)
    for (v_arch, a_arch, s_arch), (lr, adv_lr) in runs:
        cfg = copy.deepcopy(base_cfg)
        cfg.velocity.arch, cfg.advection.arch, cfg.source.arch = v_arch, a_arch, s_arch
        cfg.__post_init__()
        bundle = ModelBundle(cfg, dtype)
        o = copy.deepcopy(optim)
        o.lr, o.advection_lr = lr, adv_lr
        res = train(train_ds, bundle, o, loss_cfg, solver, val_dataset=None, stats=stats)
        if res.nan_epoch is None:
            try:
                val = evaluate_loss(bundle, val_ds, stats, solver, loss_cfg)
            except (IntegrationError, ModelError):
                val = float("nan")
            if not np.isfinite(val):
                rec = StabilityRecord(v_arch, a_arch, s_arch, lr, adv_lr, "nan", o.epochs, None)
            else:
                rec = StabilityRecord(v_arch, a_arch, s_arch, lr, adv_lr, "stable", None, val)
        else:
            rec = StabilityRecord(v_arch, a_arch, s_arch, lr, adv_lr, "nan", res.nan_epoch, None)
        log.info("stability run %s: %s", (v_arch, a_arch, s_arch, lr, adv_lr), rec.outcome)
        records.append(rec)
    return rank_records(records)


def config_snapshot(bundle, optim, loss_cfg, solver):
    return {"model": to_dict(bundle.cfg), "optim": to_dict(optim),
            "loss": to_dict(loss_cfg), "solver": to_dict(solver)}
