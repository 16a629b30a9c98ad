"""Command-line experiment runner: synth, train, eval, ablate, plot.

Every command writes into its run directory (``--out``): the resolved
config snapshot, a ``run.json`` with the run id, and its own outputs.
Exit codes: 0 success, 2 config error, 3 data error, 4 numerical instability.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from .config import STUDIES, ExperimentConfig, load_config
from .datasets import (NormStats, TrajectoryDataset, VariableCatalog, fit_norm_stats, load_era5_subset,
                       make_synthetic_dataset)
from .errors import AdvectionODEError, DataError, DomainError
from .evaluation import predict_dataset, score_dataset
from .models import BundleConfig, ModelBundle, load_checkpoint, save_checkpoint
from .plots import plot_bars, plot_field, plot_loss_curves
from .studies import derivative_error_study, source_arch_study, summarize, velocity_input_study
from .training import REFERENCE_STABILITY_RUNS, StabilityRecord, stability_matrix, train

log = logging.getLogger("advection_ode")

SPLITS = ("train", "val", "test")
SPLIT_SEED_OFFSET = {"train": 0, "val": 1000, "test": 2000}


# ---------------------------------------------------------------------------
# data and models from a config
# ---------------------------------------------------------------------------

def load_split(cfg: ExperimentConfig, split):
    d = cfg.data
    if d.kind == "synthetic":
        n = {"train": d.synth.n_samples, "val": d.val_samples, "test": d.test_samples}[split]
        synth = dataclasses.replace(d.synth, n_samples=n, lead=cfg.lead,
                                    seed=d.synth.seed + SPLIT_SEED_OFFSET[split])
        return make_synthetic_dataset(synth)
    if d.kind == "files":
        path = getattr(d, f"{split}_path")
        if not path:
            raise DataError(f"no {split} file configured (data.{split}_path)")
        return TrajectoryDataset.load(path)
    catalog = VariableCatalog.era5()
    if d.variables:
        missing = [v for v in d.variables if v not in catalog.keys]
        if missing:
            raise DataError(f"unknown variables {missing}")
        catalog = VariableCatalog([v for v in catalog if v.key in d.variables])
    history_dt = 1.0 if cfg.model.velocity.uses_dt else None
    return load_era5_subset(d.era5_path, catalog, tuple(d.splits[split]), cfg.lead,
                            history_dt, d.stride)


def bundle_config(cfg: ExperimentConfig, ds: TrajectoryDataset):
    m = cfg.model
    return BundleConfig.for_grid(ds.grid, len(ds.catalog), velocity=m.velocity,
                                 advection=m.advection, source=m.source, seed=cfg.seed)


def _dtype(cfg):
    return getattr(torch, cfg.model.dtype)


def _prepare(cfg: ExperimentConfig, command):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.snapshot(out)
    (out / "run.json").write_text(json.dumps({"run_id": cfg.run_id, "command": command}, indent=2))
    torch.manual_seed(cfg.seed)
    np.random.seed(cfg.seed)
    return out


def _write_table(rows, path_stem):
    rows = list(rows)
    Path(f"{path_stem}.json").write_text(json.dumps(rows, indent=2, default=float))
    if rows:
        with open(f"{path_stem}.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(cfg: ExperimentConfig):
    """Write train/val/test trajectory files into the run directory."""
    out = _prepare(cfg, "synth")
    paths = {}
    for split in SPLITS:
        ds = load_split(cfg, split)
        paths[split] = out / f"{split}.nc"
        ds.save(paths[split])
        log.info("wrote %s (%d samples)", paths[split], len(ds))
    return paths


def cmd_train(cfg: ExperimentConfig, checkpoint=None):
    """Train and checkpoint; returns the exit code (4 on divergence)."""
    out = _prepare(cfg, "train")
    train_ds = load_split(cfg, "train")
    if len(train_ds) == 0:
        raise DataError("training split is empty")
    val_ds = load_split(cfg, "val")
    ckdir = out / "checkpoints"
    ckdir.mkdir(exist_ok=True)
    hist_path = out / "history.jsonl"

    start_step, opt_state = 0, None
    if checkpoint:
        bundle, payload = load_checkpoint(checkpoint)
        stats = _stats_from(payload) or fit_norm_stats(train_ds)
        start_step = int(payload.get("step", 0))
        opt_state = payload.get("optimizer")
    else:
        bundle = ModelBundle(bundle_config(cfg, train_ds), _dtype(cfg))
        stats = fit_norm_stats(train_ds)
        hist_path.write_text("")
        save_checkpoint(ckdir / "initial.pt", bundle, step=0, stats=stats.to_dict(),
                        lead=train_ds.lead, run_id=cfg.run_id)

    if cfg.optim.epochs == 0 and cfg.optim.max_steps is None:
        log.info("zero-epoch run: initial checkpoint only")
        return 0

    with open(hist_path, "a") as fh:
        def on_record(rec, _opt):
            clean = {k: (None if isinstance(v, float) and not np.isfinite(v) else v)
                     for k, v in rec.items()}
            fh.write(json.dumps(clean) + "\n")
            fh.flush()

        res = train(train_ds, bundle, cfg.optim, cfg.loss, cfg.solver,
                    val_dataset=val_ds if len(val_ds) else None, stats=stats,
                    start_step=start_step, optimizer_state=opt_state, on_step=on_record)

    if res.nan_epoch is not None:
        rec = StabilityRecord(cfg.model.velocity.arch, cfg.model.advection.arch,
                              cfg.model.source.arch, cfg.optim.lr, cfg.optim.advection_lr,
                              "nan", res.nan_epoch, None)
        _write_table([rec.to_dict()], out / "stability")
        print(f"training diverged: non-finite values at epoch {res.nan_epoch} "
              f"(step {res.nan_step})", file=sys.stderr)
        return 4
    save_checkpoint(ckdir / "final.pt", bundle, step=res.steps, stats=stats.to_dict(),
                    lead=train_ds.lead, run_id=cfg.run_id, best_val_loss=res.best_val_loss,
                    optimizer=res.optimizer_state)
    summary = {"run_id": cfg.run_id, "steps": res.steps, "best_val_loss": res.best_val_loss,
               "final_train_loss": res.final_train_loss}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    return 0


def _stats_from(payload):
    s = payload.get("stats")
    return NormStats.from_dict(s) if s else None


def cmd_eval(cfg: ExperimentConfig, checkpoint):
    """Score a checkpoint (or ``oracle`` / ``persistence``) on the test split."""
    if not checkpoint:
        raise DomainError("eval needs --checkpoint (a file, 'oracle' or 'persistence')")
    out = _prepare(cfg, "eval")
    test_ds = load_split(cfg, "test")
    if len(test_ds) == 0:
        raise DataError("test split is empty")
    if checkpoint in ("oracle", "persistence"):
        model, stats, model_id = checkpoint, None, checkpoint
    else:
        if not Path(checkpoint).exists():
            raise DataError(f"checkpoint not found: {checkpoint}")
        model, payload = load_checkpoint(checkpoint)
        stats = _stats_from(payload)
        trained = int(payload.get("lead", test_ds.lead))
        if test_ds.lead > trained:
            raise DomainError(f"lead {test_ds.lead} exceeds the trained lead {trained}")
        model_id = payload.get("run_id", Path(checkpoint).stem)
    pred = predict_dataset(model, test_ds, stats, cfg.solver, cfg.eval.batch_size)
    report = score_dataset(model, test_ds, region=cfg.region, model_id=model_id, split="test",
                           weighted_numerator=cfg.eval.weighted_numerator, predictions=pred)
    report.save(out)
    np.savez(out / "sample_fields.npz", prediction=pred[0, -1, 0], target=test_ds.targets[0, -1, 0])
    return report


def cmd_ablate(cfg: ExperimentConfig, study):
    """Run one ablation study and write its table and bar chart."""
    if study not in STUDIES:
        raise DomainError(f"unknown study {study!r}; choose from {STUDIES}")
    out = _prepare(cfg, f"ablate-{study}")
    stem = out / f"ablate_{study}"
    a = cfg.ablate
    if study == "dt-interval":
        rows = derivative_error_study(a.dts)
        _write_table(rows, stem)
        plot_bars([r["dt"] for r in rows], [r["rms_error"] for r in rows], f"{stem}.png",
                  ylabel="RMS derivative error", title="finite-difference interval")
        return rows
    train_ds, val_ds, test_ds = (load_split(cfg, s) for s in SPLITS)
    if len(train_ds) == 0:
        raise DataError("training split is empty")
    base = bundle_config(cfg, train_ds)
    if study == "stability":
        runs = REFERENCE_STABILITY_RUNS[:a.max_runs] if a.max_runs else REFERENCE_STABILITY_RUNS
        eval_ds = val_ds if len(val_ds) else test_ds
        records = stability_matrix(train_ds, eval_ds, runs, base, cfg.optim, cfg.solver,
                                   cfg.loss, _dtype(cfg))
        rows = [r.to_dict() for r in records]
        _write_table(rows, out / "stability")
        _write_table(rows, stem)
        labels = ["/".join([r.velocity_arch, r.advection_arch, r.source_arch]) for r in records]
        plot_bars(labels, [r.final_val_loss if r.final_val_loss is not None else 0.0 for r in records],
                  f"{stem}.png", ylabel="validation loss", title="stability matrix")
        return records
    if len(test_ds) == 0:
        raise DataError("test split is empty")
    val = val_ds if len(val_ds) else None
    if study == "velocity-inputs":
        from .models import INPUT_PLANS
        plans = a.plans or list(INPUT_PLANS)
        rows = velocity_input_study(train_ds, test_ds, base, cfg.optim, a.seeds, plans,
                                    cfg.solver, cfg.loss, val, _dtype(cfg))
        key = "plan"
    else:
        from .models import SOURCE_ARCHS
        archs = a.archs or list(SOURCE_ARCHS)
        rows = source_arch_study(train_ds, test_ds, base, cfg.optim, a.seeds, archs,
                                 cfg.solver, cfg.loss, val, _dtype(cfg))
        key = "arch"
    _write_table(rows, stem)
    means = summarize(rows, key)
    _write_table([{key: k, "mean_rmse": v} for k, v in means.items()], f"{stem}_summary")
    plot_bars(list(means), list(means.values()), f"{stem}.png",
              ylabel=f"RMSE at lead {test_ds.lead}", title=study)
    return rows


def cmd_plot(run_dir):
    """Render loss curves, score/ablation bars and sample field maps of a run."""
    d = Path(run_dir)
    if not d.is_dir():
        raise DataError(f"run directory not found: {run_dir}")
    run_id = d.name
    if (d / "run.json").exists():
        run_id = json.loads((d / "run.json").read_text()).get("run_id", run_id)
    pdir = d / "plots"
    pdir.mkdir(exist_ok=True)
    made = []
    hist_path = d / "history.jsonl"
    has_other = (d / "scores.json").exists() or any(d.glob("ablate_*.json"))
    if hist_path.exists() or not has_other:
        history = []
        if hist_path.exists():
            history = [json.loads(x) for x in hist_path.read_text().splitlines() if x.strip()]
        if not [h for h in history if h.get("loss") is not None]:
            raise DataError(f"no training history to plot in {d}")
        path = pdir / f"{run_id}_loss.png"
        plot_loss_curves(history, path, title=run_id)
        made.append(path)
    if (d / "scores.json").exists():
        from .evaluation import ScoreReport

        report = ScoreReport.load(d / "scores.json")
        last = max(r["lead"] for r in report.rows)
        rows = [r for r in report.rows if r["lead"] == last]
        path = pdir / f"{run_id}_scores.png"
        plot_bars([r["variable"] for r in rows], [r["rmse"] for r in rows], path,
                  ylabel=f"RMSE at lead {last}", title=run_id)
        made.append(path)
    if (d / "sample_fields.npz").exists():
        fields = np.load(d / "sample_fields.npz")
        for name in ("prediction", "target"):
            path = pdir / f"{run_id}_{name}.png"
            plot_field(fields[name], path, title=f"{run_id} {name}")
            made.append(path)
    for table in sorted(d.glob("ablate_*_summary.json")):
        rows = json.loads(table.read_text())
        key = [k for k in rows[0] if k != "mean_rmse"][0]
        path = pdir / f"{run_id}_{table.stem}.png"
        plot_bars([r[key] for r in rows], [r["mean_rmse"] for r in rows], path, title=table.stem)
        made.append(path)
    return made


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="advection-ode", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("synth", "train", "eval", "ablate", "plot"):
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML or JSON experiment config")
        s.add_argument("--seed", type=int, help="overrides the config and the ADVODE_SEED variable")
        s.add_argument("--out", help="run directory")
        s.add_argument("--region", help="scoring region (north_america, south_america, australia, global)")
        s.add_argument("--lead", type=int, help="trajectory length N in hours")
        s.add_argument("--study", help="ablation study: " + ", ".join(STUDIES))
        s.add_argument("--checkpoint", help="checkpoint file; for eval also 'oracle' or 'persistence'")
        s.add_argument("-v", "--verbose", action="store_true")
        s.add_argument("overrides", nargs="*", help="dotted config overrides, e.g. optim.lr=1e-4")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.overrides, args.seed, args.out, args.region, args.lead)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "train":
            return cmd_train(cfg, args.checkpoint)
        elif args.command == "eval":
            report = cmd_eval(cfg, args.checkpoint)
            last = max(r["lead"] for r in report.rows)
            print(f"mean RMSE at lead {last}: {report.mean('rmse', lead=last):.6g}")
        elif args.command == "ablate":
            if not args.study:
                raise DomainError("ablate needs --study")
            cmd_ablate(cfg, args.study)
        else:
            for path in cmd_plot(args.out or cfg.out):
                print(path)
    except AdvectionODEError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
