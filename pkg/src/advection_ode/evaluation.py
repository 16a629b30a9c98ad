"""Latitude-weighted scores, climatology, baselines and any-lead inference."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .datasets import TARGET_VARIABLES, TrajectoryDataset, denormalize, extract_region, get_region, normalize
from .dynamics import SolverConfig, forecast
from .errors import DomainError, ShapeError, UndefinedScoreError
from .grid import latitude_weights


def _check(pred, target):
    if np.shape(pred) != np.shape(target):
        raise ShapeError(f"prediction shape {np.shape(pred)} != target {np.shape(target)}")


def rmse(pred, target, weights):
    """Per-channel latitude-weighted RMSE of (..., K, H, W) fields.

    The root is taken per leading index (sample, lead) and then averaged,
    giving one score per channel.
    """
    _check(pred, target)
    p, t = np.asarray(pred, float), np.asarray(target, float)
    w = np.asarray(weights, float)[:, None]
    per = np.sqrt((w * (p - t) ** 2).mean(axis=(-2, -1)))  # (..., K)
    return per.reshape(-1, per.shape[-1]).mean(axis=0)


def acc(pred, target, climatology, weights, weighted_numerator=True):
    """Per-channel anomaly correlation with anomalies taken against ``climatology``.

    Sums run over every axis except the channel one. With
    ``weighted_numerator=False`` the cross term is left unweighted.
    """
    _check(pred, target)
    c = np.asarray(climatology, float)
    pa = np.asarray(pred, float) - c
    ta = np.asarray(target, float) - c
    w = np.asarray(weights, float)[:, None]
    axes = tuple(i for i in range(pa.ndim) if i != pa.ndim - 3)
    num = ((w if weighted_numerator else 1.0) * pa * ta).sum(axis=axes)
    den = np.sqrt((w * pa ** 2).sum(axis=axes) * (w * ta ** 2).sum(axis=axes))
    if np.any(den == 0):
        raise UndefinedScoreError("zero anomaly variance; ACC is undefined")
    return num / den


def climatology(fields):
    """Per-channel, per-cell mean over every leading axis of (..., K, H, W)."""
    x = np.asarray(fields, float)
    if x.ndim < 3 or x.size == 0:
        raise DomainError("climatology needs a nonempty (..., K, H, W) array")
    c = x.reshape(-1, *x.shape[-3:]).mean(axis=0)
    if not np.all(np.isfinite(c)):
        raise DomainError("climatology is not finite")
    return c


def persistence_baseline(u0, n):
    """Identity forecast: the prediction at every lead ``n`` is ``u0``."""
    if n < 1:
        raise DomainError("lead must be >= 1")
    return u0.clone() if isinstance(u0, torch.Tensor) else np.array(u0, copy=True)


def flexible_inference(bundle, grid, u0, trained_lead, leads=None, solver=None,
                       t0_days=None, history=None, history_dt=None):
    """Predictions at several leads from a single rollout of a ``trained_lead`` model.

    Returns ``{n: (B, K, H, W)}`` for each requested ``n`` (default 1..N).
    """
    leads = list(range(1, trained_lead + 1)) if leads is None else [int(n) for n in leads]
    for n in leads:
        if not 1 <= n <= trained_lead:
            raise DomainError(f"lead {n} outside 1..{trained_lead}")
    fc = forecast(bundle, grid, u0, trained_lead, solver, t0_days, history, history_dt)
    return {n: fc.u[:, n - 1] for n in leads}


def predict_dataset(model, ds: TrajectoryDataset, stats=None, solver=None, batch_size=32):
    """Physical-unit predictions (S, N, K, H, W) for every sample of ``ds``.

    ``model`` is a ModelBundle, ``"persistence"`` or ``"oracle"`` (targets
    fed back, for plumbing checks).
    """
    if isinstance(model, str):
        if model == "oracle":
            return np.array(ds.targets, copy=True)
        if model == "persistence":
            return np.repeat(persistence_baseline(ds.inputs, 1)[:, None], ds.lead, axis=1)
        raise DomainError(f"unknown reference model {model!r}")
    stats = stats or ds.stats
    if stats is None:
        raise DomainError("normalization statistics are required to run a model")
    solver = solver or SolverConfig()
    dtype = next(model.parameters()).dtype
    was = model.training
    model.eval()
    out = []
    try:
        with torch.no_grad():
            for s in range(0, len(ds), batch_size):
                sl = slice(s, s + batch_size)
                u0 = torch.as_tensor(normalize(ds.inputs[sl], stats), dtype=dtype)
                hist = None
                if ds.history is not None:
                    hist = torch.as_tensor(normalize(ds.history[sl], stats), dtype=dtype)
                t0 = torch.as_tensor(ds.t0[sl] / 24.0)
                fc = forecast(model, ds.grid, u0, ds.lead, solver, t0, hist, ds.history_dt)
                out.append(denormalize(fc.u.double().numpy(), stats))
    finally:
        model.train(was)
    return np.concatenate(out) if out else np.empty(ds.targets.shape)


def score_channels(catalog):
    """Headline variables when the catalog has them, else every channel."""
    keys = catalog.keys
    if all(v in keys for v in TARGET_VARIABLES):
        return list(TARGET_VARIABLES)
    return list(keys)


@dataclass
class ScoreReport:
    rows: list                    # dicts: variable, lead, rmse, acc
    meta: dict = field(default_factory=dict)

    def table(self, metric):
        """{variable: {lead: value}}."""
        out = {}
        for r in self.rows:
            out.setdefault(r["variable"], {})[r["lead"]] = r[metric]
        return out

    def value(self, variable, lead, metric="rmse"):
        for r in self.rows:
            if r["variable"] == variable and r["lead"] == lead:
                return r[metric]
        raise KeyError((variable, lead))

    def mean(self, metric="rmse", lead=None):
        vals = [r[metric] for r in self.rows if lead is None or r["lead"] == lead]
        return float(np.mean(vals))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["variable", "lead", "rmse", "acc"])
            w.writeheader()
            w.writerows(self.rows)

    def to_json(self, path):
        Path(path).write_text(json.dumps({"meta": self.meta, "rows": self.rows}, indent=2))

    def save(self, directory, stem="scores"):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        self.to_csv(d / f"{stem}.csv")
        self.to_json(d / f"{stem}.json")
        return d / f"{stem}.csv", d / f"{stem}.json"

    @classmethod
    def load(cls, path):
        data = json.loads(Path(path).read_text())
        return cls(data["rows"], data.get("meta", {}))


def score_dataset(model, ds: TrajectoryDataset, stats=None, solver=None, region=None,
                  channels=None, clim=None, weighted_numerator=True, model_id=None,
                  split=None, predictions=None):
    """Score a model (or reference forecast) on every lead and channel of ``ds``.

    The climatology defaults to the per-cell mean of the scored targets.
    With ``region`` the fields are cropped before scoring.
    """
    pred = predict_dataset(model, ds, stats, solver) if predictions is None else predictions
    target, grid = ds.targets, ds.grid
    if region is not None:
        spec = get_region(region) if isinstance(region, str) else region
        pred, _ = extract_region(pred, spec, grid)
        target, grid = extract_region(target, spec, grid)
        region = spec.name
    clim = climatology(target) if clim is None else clim
    w = latitude_weights(grid)
    channels = channels or score_channels(ds.catalog)
    idx = [ds.catalog.index(c) for c in channels]
    rows = []
    for n in range(1, ds.lead + 1):
        p, t = pred[:, n - 1], target[:, n - 1]
        r = rmse(p, t, w)
        try:
            a = acc(p, t, clim, w, weighted_numerator)
        except UndefinedScoreError:
            a = np.full(p.shape[-3], np.nan)
        for c, i in zip(channels, idx):
            rows.append({"variable": c, "lead": n, "rmse": float(r[i]), "acc": float(a[i])})
    meta = {"model": model_id or (model if isinstance(model, str) else "bundle"),
            "split": split, "region": region or "full", "grid": list(grid.shape),
            "samples": len(ds), "weighted_numerator": weighted_numerator}
    return ScoreReport(rows, meta)
