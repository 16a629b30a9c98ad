"""Ablation studies: velocity inputs, source architecture, derivative interval."""

from __future__ import annotations

import copy
import logging
import math

import numpy as np
import torch

from .dynamics import finite_difference_velocity_baseline
from .evaluation import score_dataset
from .models import INPUT_PLANS, SOURCE_ARCHS, ModelBundle
from .training import train

log = logging.getLogger(__name__)


def closed_form_derivative_rms(dt, period=24.0):
    """RMS over one period of the one-sided difference error on sin(2 pi t / period).

    Both the backward and the forward difference of sin(w t) equal
    ``A cos(w t -/+ w dt / 2)`` with ``A = 2 sin(w dt / 2) / dt``, so the
    error is a sinusoid of amplitude sqrt(A^2 + w^2 - 2 A w cos(w dt / 2)).
    """
    w = 2.0 * math.pi / period
    a = 2.0 * math.sin(w * dt / 2.0) / dt
    amp = math.sqrt(max(a * a + w * w - 2.0 * a * w * math.cos(w * dt / 2.0), 0.0))
    return amp / math.sqrt(2.0)


def derivative_error_study(dts=(1, 2, 3, 6, 12, 24), period=24.0, samples=2400):
    """Finite-difference velocity error on u(t) = sin(2 pi t / period).

    The empirical RMS uses ``samples`` equally spaced times over one period.
    """
    w = 2.0 * math.pi / period
    t = np.arange(samples) * period / samples
    rows = []
    for dt in dts:
        est = finite_difference_velocity_baseline(np.sin(w * t), np.sin(w * (t - dt)), float(dt))
        err = est - w * np.cos(w * t)
        rows.append({"dt": float(dt), "rms_error": float(np.sqrt(np.mean(err ** 2))),
                     "closed_form": closed_form_derivative_rms(dt, period)})
    return rows


def train_and_score(train_ds, test_ds, bundle_cfg, optim, solver=None, loss_cfg=None,
                    val_ds=None, dtype=torch.float32):
    """Train one bundle and return (mean held-out RMSE at the last lead, TrainResult)."""
    bundle = ModelBundle(bundle_cfg, dtype)
    res = train(train_ds, bundle, optim, loss_cfg, solver, val_dataset=val_ds)
    if res.nan_epoch is not None:
        return float("nan"), res
    report = score_dataset(bundle, test_ds, res.stats, solver)
    return report.mean("rmse", lead=test_ds.lead), res


def _sweep(attr, values, train_ds, test_ds, base_cfg, optim, seeds, solver, loss_cfg, val_ds, dtype):
    rows = []
    for value in values:
        for seed in seeds:
            cfg = copy.deepcopy(base_cfg)
            setattr(getattr(cfg, attr[0]), attr[1], value)
            cfg.seed = seed
            o = copy.deepcopy(optim)
            o.seed = seed
            score, res = train_and_score(train_ds, test_ds, cfg, o, solver, loss_cfg, val_ds, dtype)
            losses = [h["loss"] for h in res.history if "loss" in h]
            rows.append({attr[1]: value, "seed": seed, "rmse": score,
                         "initial_loss": losses[0] if losses else None,
                         "final_loss": res.final_train_loss,
                         "outcome": "stable" if res.nan_epoch is None else "nan"})
            log.info("%s=%s seed=%s rmse=%.4f", attr[1], value, seed, score)
    return rows


def summarize(rows, key):
    """Mean RMSE per study value, in first-seen order."""
    out = {}
    for r in rows:
        out.setdefault(r[key], []).append(r["rmse"])
    return {k: float(np.mean(v)) for k, v in out.items()}


def velocity_input_study(train_ds, test_ds, base_cfg, optim, seeds=(0,), plans=INPUT_PLANS,
                         solver=None, loss_cfg=None, val_ds=None, dtype=torch.float32):
    return _sweep(("velocity", "plan"), plans, train_ds, test_ds, base_cfg, optim, seeds,
                  solver, loss_cfg, val_ds, dtype)


def source_arch_study(train_ds, test_ds, base_cfg, optim, seeds=(0,), archs=SOURCE_ARCHS,
                      solver=None, loss_cfg=None, val_ds=None, dtype=torch.float32):
    return _sweep(("source", "arch"), archs, train_ds, test_ds, base_cfg, optim, seeds,
                  solver, loss_cfg, val_ds, dtype)
