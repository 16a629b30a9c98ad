"""Acceptance gate: one test per criterion, each with its runtime budget.

A PASS/FAIL line per criterion is printed in the terminal summary.
Criteria 7, 8 and 12 train desk-scale models and take several minutes.
"""

import json
import math
import time
from contextlib import contextmanager

import jsonschema
import numpy as np
import pytest
import torch

import advection_ode.evaluation as evaluation
from advection_ode.cli import main
from advection_ode.datasets import (SynthConfig, extract_region, get_region, make_synthetic_dataset,
                                    normalize)
from advection_ode.dynamics import SolverConfig, forecast, integrate
from advection_ode.embeddings import spatial_encoding, spatiotemporal_embedding, temporal_encoding
from advection_ode.evaluation import acc, flexible_inference, rmse, score_dataset
from advection_ode.grid import GridSpec, divergence, latitude_weights, spatial_gradient
from advection_ode.models import BundleConfig, ModelBundle
from advection_ode.studies import derivative_error_study
from advection_ode.training import OptimConfig, multi_task_loss, train
from conftest import tiny_bundle_config
from oracles import (acc_loop, central_difference_grad, loss_loop, rmse_loop,
                     semidiscrete_advection)

RESULTS = {}

# shared protocol of the learning experiments (criteria 7 and 8)
PROTOCOL = dict(n_train=500, n_test=64, lead=6, steps=200, batch_size=4)


@contextmanager
def criterion(number, title, budget_s):
    info = {}
    start = time.time()
    try:
        yield info
    except BaseException as e:
        RESULTS[number] = ("FAIL", title, time.time() - start, f"{type(e).__name__}: {e}"[:200])
        raise
    elapsed = time.time() - start + info.get("extra_seconds", 0.0)
    detail = info.get("detail", "")
    if elapsed >= budget_s:
        RESULTS[number] = ("FAIL", title, elapsed, f"runtime {elapsed:.1f}s over budget {budget_s}s")
        raise AssertionError(f"runtime {elapsed:.1f}s exceeds {budget_s}s")
    RESULTS[number] = ("PASS", title, elapsed, detail)


# ---------------------------------------------------------------------------

def test_c01_conservation():
    with criterion(1, "conservation on a periodic grid", 5) as info:
        grid = GridSpec.regular(16, 32, lat_boundary="periodic")
        cfg = BundleConfig.for_grid(grid, 2)
        cfg.source.arch = "none"
        bundle = ModelBundle(cfg, torch.float64).eval()
        with torch.no_grad():
            for p in bundle.advection.parameters():
                p.zero_()
            u0 = torch.as_tensor(make_synthetic_dataset(SynthConfig(n_samples=2)).inputs)
            fc = forecast(bundle, grid, u0, 24, SolverConfig("euler"))
        assert torch.equal(fc.v[:, -1], fc.v0)
        total0 = u0.sum(dim=(-1, -2))
        drift = ((fc.u.sum(dim=(-1, -2)) - total0[:, None]).abs() / total0.abs()[:, None]).max().item()
        info["detail"] = f"max relative drift {drift:.2e} over 24 steps"
        assert drift <= 1e-8


def test_c02_solver_order():
    with criterion(2, "Euler error halves with the step", 30) as info:
        grid = GridSpec.regular(16, 32, lat_boundary="periodic")
        y, x = np.meshgrid(np.arange(16), np.arange(32), indexing="ij")
        u0 = np.exp(-((x - 16) ** 2 + (y - 8) ** 2) / (2 * 2.5 ** 2))
        cx, cy, T = 0.8, 0.4, 4.0
        exact = semidiscrete_advection(u0, cx, cy, T)
        v = torch.tensor([cx, cy], dtype=torch.float64)[None, :, None, None].expand(1, 2, 16, 32)
        errs = []
        for dt in (0.5, 0.25, 0.125, 0.0625):
            solver = SolverConfig("euler", dt=dt, substeps=int(round(T / dt)))
            traj = integrate(torch.as_tensor(u0)[None, None], v, None, grid, solver, 1)
            errs.append(np.abs(traj.u[0, -1, 0].numpy() - exact).max())
        ratios = [errs[i] / errs[i + 1] for i in range(3)]
        info["detail"] = "ratios " + ", ".join(f"{r:.3f}" for r in ratios)
        assert all(1.7 <= r <= 2.3 for r in ratios)


def test_c03_operator_order():
    with criterion(3, "gradient/divergence are second order", 10) as info:
        errs = {"grad": [], "div": []}
        for n in (16, 32, 64):
            h = 2 * math.pi / (2 * n)
            grid = GridSpec.regular(n, 2 * n, lat_boundary="periodic", dx=h, dy=2 * math.pi / n)
            Y, X = torch.meshgrid(torch.arange(n, dtype=torch.float64) * grid.dy,
                                  torch.arange(2 * n, dtype=torch.float64) * grid.dx, indexing="ij")
            f = torch.sin(X) * torch.cos(2 * Y)
            g = spatial_gradient(f[None], grid)
            eg = max((g[0] - torch.cos(X) * torch.cos(2 * Y)).abs().max().item(),
                     (g[1] + 2 * torch.sin(X) * torch.sin(2 * Y)).abs().max().item())
            vel = torch.stack([torch.cos(X) * torch.sin(Y), torch.sin(X) * torch.cos(Y)])
            d = divergence(vel, grid)[0]
            ed = (d - (-torch.sin(X) * torch.sin(Y) - torch.sin(X) * torch.sin(Y))).abs().max().item()
            errs["grad"].append(eg)
            errs["div"].append(ed)
        ratios = {k: [e[i] / e[i + 1] for i in range(2)] for k, e in errs.items()}
        info["detail"] = "; ".join(f"{k} " + ", ".join(f"{r:.3f}" for r in v) for k, v in ratios.items())
        assert all(3.5 <= r <= 4.5 for v in ratios.values() for r in v)


def test_c04_derivative_interval_study():
    with criterion(4, "finite-difference error grows with the interval", 1) as info:
        rows = derivative_error_study((1, 2, 3, 6, 12))
        errs = [r["rms_error"] for r in rows]
        gap = max(abs(r["rms_error"] - r["closed_form"]) for r in rows)
        info["detail"] = "errors " + ", ".join(f"{e:.4f}" for e in errs) + f"; closed-form gap {gap:.1e}"
        assert all(a < b for a, b in zip(errs, errs[1:]))
        assert gap <= 1e-10


def test_c05_gradient_oracle():
    with criterion(5, "pipeline gradients match finite differences", 120) as info:
        ds = make_synthetic_dataset(SynthConfig(height=8, width=16, lead=3, n_samples=2, seed=11))
        grid = ds.grid
        bundle = ModelBundle(tiny_bundle_config(grid), torch.float64).eval()
        u0 = torch.as_tensor(ds.inputs)
        target = torch.as_tensor(ds.targets)
        t0 = torch.as_tensor(ds.t0 / 24.0)
        w = latitude_weights(grid)

        def loss():
            return multi_task_loss(forecast(bundle, grid, u0, 3, None, t0).u, target, w)

        bundle.zero_grad()
        loss().backward()
        gen = np.random.default_rng(0)
        worst, total = 0.0, 0
        for part in (bundle.velocity, bundle.advection, bundle.source):
            params = [p for p in part.parameters()]
            sizes = np.array([p.numel() for p in params])
            picks = []
            for _ in range(100):
                j = gen.choice(len(params), p=sizes / sizes.sum())
                picks.append((params[j], int(gen.integers(params[j].numel()))))
            with torch.no_grad():
                numeric = central_difference_grad(lambda: loss().item(), picks)
            for (p, i), n in zip(picks, numeric):
                a = p.grad.view(-1)[i].item()
                err = abs(a - n) / max(abs(a), abs(n), 1e-7)
                worst = max(worst, err)
                total += 1
        info["detail"] = f"{total} parameters, worst relative error {worst:.2e}"
        assert total >= 300 and worst <= 1e-4


def test_c06_metric_oracles():
    with criterion(6, "loss, RMSE and ACC match loop oracles", 5) as info:
        rng = np.random.default_rng(5)
        lats = np.linspace(-80, 80, 4)
        w = latitude_weights(lats)
        p, t = rng.normal(size=(4, 3, 4, 6)), rng.normal(size=(4, 3, 4, 6))
        clim = rng.normal(size=(3, 4, 6))
        e_loss = abs(multi_task_loss(torch.as_tensor(p), torch.as_tensor(t), w).item() - loss_loop(p, t, lats))
        e_rmse = np.abs(rmse(p[0], t[0], w) - rmse_loop(p[0], t[0], lats)).max()
        e_acc = np.abs(acc(p, t, clim, w) - acc_loop(p, t, clim, lats)).max()
        e_w = abs(latitude_weights(GridSpec.regular(32, 64)).mean() - 1.0)
        info["detail"] = f"loss {e_loss:.1e}, rmse {e_rmse:.1e}, acc {e_acc:.1e}, weight mean {e_w:.1e}"
        assert max(e_loss, e_rmse, e_acc, e_w) <= 1e-12


# ---------------------------------------------------------------------------
# learning experiments

_CACHE = {}


def _protocol_data():
    if "data" not in _CACHE:
        cfg = SynthConfig(n_samples=PROTOCOL["n_train"], lead=PROTOCOL["lead"], seed=0)
        train_ds = make_synthetic_dataset(cfg)
        test_ds = make_synthetic_dataset(SynthConfig(n_samples=PROTOCOL["n_test"], lead=PROTOCOL["lead"], seed=1))
        _CACHE["data"] = (train_ds, test_ds)
    return _CACHE["data"]


def _protocol_run(plan, seed):
    key = (plan, seed)
    if key not in _CACHE:
        start = time.time()
        train_ds, test_ds = _protocol_data()
        cfg = BundleConfig.for_grid(train_ds.grid, 2, seed=seed)
        cfg.velocity.plan = plan
        bundle = ModelBundle(cfg)
        optim = OptimConfig(batch_size=PROTOCOL["batch_size"], epochs=100,
                            max_steps=PROTOCOL["steps"], seed=seed)
        res = train(train_ds, bundle, optim)
        assert res.nan_epoch is None, f"run {key} diverged"
        report = score_dataset(bundle, test_ds, res.stats)
        persist = score_dataset("persistence", test_ds)
        losses = [h["loss"] for h in res.history if "loss" in h]
        _CACHE[key] = {"losses": losses, "rmse": report.mean("rmse", lead=PROTOCOL["lead"]),
                       "persistence": persist.mean("rmse", lead=PROTOCOL["lead"]),
                       "seconds": time.time() - start}
    return _CACHE[key]


@pytest.mark.slow
def test_c07_end_to_end_learning():
    with criterion(7, "training halves the loss and beats persistence", 15 * 60) as info:
        run = _protocol_run("u+grad", 0)
        first, last = run["losses"][0], float(np.mean(run["losses"][-10:]))
        info["detail"] = (f"{len(run['losses'])} steps, loss {first:.3g} -> {last:.3g}; "
                          f"lead-6 RMSE {run['rmse']:.4f} vs persistence {run['persistence']:.4f}")
        assert len(run["losses"]) == PROTOCOL["steps"]
        assert last <= 0.5 * first
        assert run["rmse"] < run["persistence"]


@pytest.mark.slow
def test_c08_velocity_input_ordering():
    with criterion(8, "(u, grad u) inputs beat du/dt-only inputs", 45 * 60) as info:
        seeds = (0, 1, 2)
        reused = 0.0
        scores = {}
        for plan in ("u+grad", "dt"):
            for s in seeds:
                cached = (plan, s) in _CACHE
                run = _protocol_run(plan, s)
                if cached:
                    reused += run["seconds"]
                scores.setdefault(plan, []).append(run["rmse"])
        info["extra_seconds"] = reused
        means = {k: float(np.mean(v)) for k, v in scores.items()}
        info["detail"] = (f"mean lead-6 RMSE u+grad {means['u+grad']:.4f} "
                          f"({', '.join(f'{x:.3f}' for x in scores['u+grad'])}) vs du/dt "
                          f"{means['dt']:.4f} ({', '.join(f'{x:.3f}' for x in scores['dt'])})")
        assert means["u+grad"] <= means["dt"]


def test_c09_flexible_inference(monkeypatch):
    with criterion(9, "one rollout serves every lead", 60) as info:
        tr = make_synthetic_dataset(SynthConfig(n_samples=16, lead=8, seed=2))
        te = make_synthetic_dataset(SynthConfig(n_samples=8, lead=8, seed=3))
        bundle = ModelBundle(BundleConfig.for_grid(tr.grid, 2))
        res = train(tr, bundle, OptimConfig(batch_size=4, epochs=1))
        assert res.nan_epoch is None
        bundle.eval()
        u0 = torch.as_tensor(normalize(te.inputs, res.stats), dtype=torch.float32)
        t0 = torch.as_tensor(te.t0 / 24.0)
        calls = []
        real = evaluation.forecast
        monkeypatch.setattr(evaluation, "forecast", lambda *a, **k: calls.append(1) or real(*a, **k))
        with torch.no_grad():
            preds = flexible_inference(bundle, te.grid, u0, 8, t0_days=t0)
            standard = forecast(bundle, te.grid, u0, 8, None, t0)
        assert len(calls) == 1 and sorted(preds) == list(range(1, 9))
        assert torch.equal(preds[8], standard.u[:, -1])
        report = score_dataset(bundle, te, res.stats)
        per_lead = [report.mean("rmse", lead=n) for n in range(1, 9)]
        info["detail"] = "per-lead RMSE " + ", ".join(f"{x:.3f}" for x in per_lead)
        assert all(np.isfinite(per_lead)) and {r["lead"] for r in report.rows} == set(range(1, 9))


def test_c10_region_extraction():
    with criterion(10, "region boxes give the reference shapes", 1) as info:
        grid = GridSpec.regular(32, 64)
        field = np.zeros((32, 64))
        shapes = {name: extract_region(field, get_region(name), grid)[0].shape
                  for name in ("north_america", "south_america", "australia", "global")}
        info["detail"] = ", ".join(f"{k} {v[0]}x{v[1]}" for k, v in shapes.items())
        assert shapes == {"north_america": (8, 14), "south_america": (14, 10),
                          "australia": (10, 14), "global": (32, 64)}


def test_c11_embedding_contracts():
    with criterion(11, "embedding layout and identities", 1) as info:
        grid = GridSpec([-45.0, 0.0, 30.0], [0.0, 90.0, 180.0, 270.0])
        e = spatiotemporal_embedding(grid, torch.tensor([0.0, 0.37, 123.9], dtype=torch.float64))
        assert e.shape == (3, 34, 3, 4)
        s = spatial_encoding(grid)
        assert torch.allclose(s[:, 1, 0], torch.tensor([0.0, 1, 0, 1, 0, 0], dtype=torch.float64), atol=1e-15)
        assert torch.allclose(temporal_encoding(0.0), torch.tensor([0.0, 1, 0, 1], dtype=torch.float64))
        worst = 0.0
        for b in range(3):
            sp, tp, prod = e[b, :6], e[b, 6:10], e[b, 10:]
            for i, j in ((0, 1), (2, 3)):
                worst = max(worst, (sp[i] ** 2 + sp[j] ** 2 - 1).abs().max().item(),
                            (tp[i] ** 2 + tp[j] ** 2 - 1).abs().max().item())
            for i in range(6):
                for j in range(4):
                    worst = max(worst, (prod[i * 4 + j] - sp[i] * tp[j]).abs().max().item())
        info["detail"] = f"34 channels, worst identity error {worst:.1e}"
        assert worst <= 1e-12


STABILITY_SCHEMA = {
    "type": "array",
    "minItems": 4,
    "items": {
        "type": "object",
        "required": ["velocity_arch", "advection_arch", "source_arch", "lr", "advection_lr",
                     "outcome", "nan_epoch", "final_val_loss", "rank"],
        "properties": {
            "velocity_arch": {"enum": ["resnet", "vit"]},
            "advection_arch": {"enum": ["resnet", "vit"]},
            "source_arch": {"enum": ["resnet3d", "dit", "resnet2d", "vit", "none"]},
            "lr": {"type": "number", "exclusiveMinimum": 0},
            "advection_lr": {"type": "number", "exclusiveMinimum": 0},
            "outcome": {"enum": ["stable", "nan"]},
            "nan_epoch": {"type": ["integer", "null"], "minimum": 1},
            "final_val_loss": {"type": ["number", "null"]},
            "rank": {"type": ["integer", "null"], "minimum": 1},
        },
        "allOf": [
            {"if": {"properties": {"outcome": {"const": "nan"}}},
             "then": {"properties": {"nan_epoch": {"type": "integer"}, "rank": {"type": "null"}}}},
            {"if": {"properties": {"outcome": {"const": "stable"}}},
             "then": {"properties": {"rank": {"type": "integer"}, "final_val_loss": {"type": "number"}}}},
        ],
    },
}


@pytest.mark.slow
def test_c12_stability_harness(tmp_path):
    with criterion(12, "stability matrix records outcome, NaN epoch and rank", 30 * 60) as info:
        code = main(["ablate", "--study", "stability", "--out", str(tmp_path), "--seed", "0",
                     "ablate.max_runs=4", "data.synth.n_samples=48", "data.val_samples=16",
                     "data.test_samples=0", "optim.epochs=2", "optim.batch_size=4"])
        assert code == 0
        rows = json.loads((tmp_path / "stability.json").read_text())
        jsonschema.validate(rows, STABILITY_SCHEMA)
        stable = sorted((r for r in rows if r["outcome"] == "stable"), key=lambda r: r["final_val_loss"])
        assert [r["rank"] for r in stable] == list(range(1, len(stable) + 1))
        assert (tmp_path / "stability.csv").exists()
        info["detail"] = "; ".join(
            f"{r['velocity_arch']}/{r['advection_arch']}/{r['source_arch']} "
            + (f"stable rank {r['rank']}" if r["outcome"] == "stable" else f"NaN at epoch {r['nan_epoch']}")
            for r in rows)
