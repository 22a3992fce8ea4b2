"""generate / train / eval / sweep commands behind the ``dq`` entry point.

A run directory holds everything one configuration produces:

    manifest.json                     config + hashes + data file map
    data/seed<S>/{train,test}.jsonl
    checkpoints/<method>_m<K>_seed<S>.ckpt
    cells/<method>_m<K>_seed<S>/      report.json (deterministic) + timing.json
    results.csv, summary.md, xgauc_vs_groups.svg

Sweep cells are cached: a cell whose report exists is reused, so re-running
an unchanged sweep reproduces results.csv byte for byte, and deleting one
cell directory recomputes only that cell.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..data import Dataset, DatasetSchema, load_dataset, save_dataset
from ..grouping import fit_duration_groups
from ..metrics import EvalReport, evaluate_predictions
from ..model import ModelConfig
from ..predictors import Predictor, predict_dataset, train_predictor
from ..synthgen import generate_world, sample_logged_interactions, sample_unbiased_test
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, canonical_json, config_hash, schema_hash
from .reports import SweepResult, SweepRow, summary_markdown, xgauc_chart_svg


class CliError(ValueError):
    pass


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _data_hash(cfg: RunConfig) -> str:
    payload = {"gen": cfg.gen.to_dict(), "train_size": cfg.train_size,
               "test_size": cfg.test_size, "seeds": list(cfg.seeds)}
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()[:16]


def _run_dir(cfg: RunConfig, out_dir) -> Path:
    return Path(out_dir) if out_dir is not None else Path(cfg.output_dir)


def _cell_name(method: str, m: int, seed: int) -> str:
    return f"{method}_m{m}_seed{seed}"


def cmd_generate(cfg: RunConfig, out_dir=None) -> dict:
    """Write biased train / unbiased test JSONL per seed, plus the manifest."""
    if cfg.train_size < 1 or cfg.test_size < 1:
        raise CliError(f"train_size and test_size must be >= 1, "
                       f"got {cfg.train_size}/{cfg.test_size}")
    run = _run_dir(cfg, out_dir)
    data_map = {}
    schema = None
    for seed in cfg.seeds:
        gen_cfg = replace(cfg.gen, seed=seed)
        world = generate_world(gen_cfg)
        train_ds = sample_logged_interactions(world, cfg.train_size, gen_cfg)
        test_ds = sample_unbiased_test(world, cfg.test_size, seed)
        schema = train_ds.schema
        seed_dir = run / "data" / f"seed{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        save_dataset(train_ds, seed_dir / "train.jsonl")
        save_dataset(test_ds, seed_dir / "test.jsonl")
        data_map[str(seed)] = {"train": f"data/seed{seed}/train.jsonl",
                               "test": f"data/seed{seed}/test.jsonl"}
    manifest = {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "data_hash": _data_hash(cfg),
        "schema": schema.to_dict(),
        "schema_hash": schema_hash(schema),
        "seeds": list(cfg.seeds),
        "data": data_map,
    }
    _dump_json(manifest, run / "manifest.json")
    return manifest


def _load_manifest(run: Path) -> dict:
    path = run / "manifest.json"
    if not path.exists():
        raise CliError(f"no manifest at {path}; run `dq generate` first")
    return json.loads(path.read_text(encoding="utf-8"))


def _load_split(run: Path, manifest: dict, seed: int, split: str) -> Dataset:
    try:
        rel = manifest["data"][str(seed)][split]
    except KeyError:
        raise CliError(f"manifest has no {split} data for seed {seed}") from None
    schema = DatasetSchema.from_dict(manifest["schema"])
    return load_dataset(run / rel, schema=schema)


def _model_for(cfg: RunConfig, method: str, seed: int) -> ModelConfig:
    model = replace(cfg.model, seed=seed)
    overrides = cfg.method_overrides.get(method, {})
    if overrides:
        model = ModelConfig.from_dict({**model.to_dict(), **overrides})
    return model


def cmd_train(cfg: RunConfig, method: str, m: int, seed: int | None = None,
              out_dir=None, train_ds: Dataset | None = None) -> Path:
    """Train one method at one group count; writes a versioned checkpoint."""
    run = _run_dir(cfg, out_dir)
    seed = cfg.seeds[0] if seed is None else seed
    if train_ds is None:
        manifest = _load_manifest(run)
        train_ds = _load_split(run, manifest, seed, "train")
    predictor = train_predictor(method, train_ds, m, _model_for(cfg, method, seed),
                                min_group_samples=cfg.min_group_samples)
    ckpt_dir = run / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    path = ckpt_dir / f"{_cell_name(method, m, seed)}.ckpt"
    save_checkpoint(path, predictor, quantile_grid=cfg.quantile_grid,
                    extra_header={"config_hash": config_hash(cfg)})
    return path


def evaluate_watchtime(predict_fn, ds: Dataset, m_diag: int = 8,
                       seed: int = 0) -> EvalReport:
    """Evaluate any predictor-like callable (Dataset -> predictions) on ds."""
    preds = np.asarray(predict_fn(ds), dtype=np.float64)
    groups = fit_duration_groups(ds.durations, min(m_diag, len(ds)))
    return evaluate_predictions(preds, ds.watch_times, ds.user_ids, ds.durations,
                                groups, seed=seed)


def cmd_eval(cfg: RunConfig, checkpoint_path, test_ds: Dataset | None = None,
             seed: int | None = None, out_dir=None) -> tuple[EvalReport, Path]:
    """Evaluate a checkpoint; writes report JSON and returns the report."""
    run = _run_dir(cfg, out_dir)
    predictor, header = load_checkpoint(checkpoint_path)
    if test_ds is None:
        manifest = _load_manifest(run)
        seed = cfg.seeds[0] if seed is None else seed
        test_ds = _load_split(run, manifest, seed, "test")
    if header["schema_hash"] != schema_hash(test_ds.schema):
        raise CliError(
            f"checkpoint schema hash {header['schema_hash']} does not match "
            f"the test set ({schema_hash(test_ds.schema)})")
    eval_seed = predictor.train_meta.get("seed", 0)
    report = evaluate_watchtime(lambda ds: predict_dataset(predictor, ds),
                                test_ds, cfg.diagnostic_groups, seed=eval_seed)
    stem = Path(checkpoint_path).stem
    cell_dir = run / "cells" / stem
    cell_dir.mkdir(parents=True, exist_ok=True)
    report_path = cell_dir / "report.json"
    _dump_json({"cell": stem, "config_hash": config_hash(cfg),
                "report": report.to_dict()}, report_path)
    return report, report_path


def _ensure_data(cfg: RunConfig, run: Path) -> dict:
    manifest_path = run / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if manifest.get("data_hash") == _data_hash(cfg):
            return manifest
    return cmd_generate(cfg, run)


def _sweep_cells(cfg: RunConfig) -> list[tuple[str, int, int]]:
    cells = []
    for method in cfg.methods:
        counts = [1] if method in ("vr", "wlr") else list(cfg.group_counts)
        counts = [m for m in counts if m in cfg.group_counts]
        for m in counts:
            for seed in cfg.seeds:
                cells.append((method, m, seed))
    return cells


def cmd_sweep(cfg: RunConfig, out_dir=None, fresh: bool = False,
              verbose: bool = False) -> SweepResult:
    """Train and evaluate every (method, group count, seed) cell.

    Finished cells (report.json + timing.json present) are reused unless
    ``fresh``; failures are recorded per cell and the sweep continues.
    """
    run = _run_dir(cfg, out_dir)
    run.mkdir(parents=True, exist_ok=True)
    manifest = _ensure_data(cfg, run)
    cells = _sweep_cells(cfg)

    datasets: dict[int, tuple[Dataset, Dataset]] = {}

    def data_for(seed: int) -> tuple[Dataset, Dataset]:
        if seed not in datasets:
            datasets[seed] = (_load_split(run, manifest, seed, "train"),
                              _load_split(run, manifest, seed, "test"))
        return datasets[seed]

    rows = []
    for method, m, seed in cells:
        name = _cell_name(method, m, seed)
        cell_dir = run / "cells" / name
        report_path = cell_dir / "report.json"
        timing_path = cell_dir / "timing.json"
        error_path = cell_dir / "error.json"
        if not fresh and report_path.exists() and timing_path.exists():
            saved = json.loads(report_path.read_text(encoding="utf-8"))
            report = EvalReport.from_dict(saved["report"])
            wall = json.loads(timing_path.read_text(encoding="utf-8"))["wall_time_s"]
            rows.append(SweepRow(method, m, seed, report.mae, report.xauc,
                                 report.xgauc, wall))
            continue
        if not fresh and error_path.exists():
            err = json.loads(error_path.read_text(encoding="utf-8"))["error"]
            rows.append(SweepRow(method, m, seed, float("nan"), float("nan"),
                                 float("nan"), float("nan"), error=err))
            continue
        t0 = time.perf_counter()
        try:
            train_ds, test_ds = data_for(seed)
            ckpt = cmd_train(cfg, method, m, seed=seed, out_dir=run, train_ds=train_ds)
            report, _ = cmd_eval(cfg, ckpt, test_ds=test_ds, out_dir=run)
            wall = time.perf_counter() - t0
            cell_dir.mkdir(parents=True, exist_ok=True)
            _dump_json({"wall_time_s": wall}, timing_path)
            rows.append(SweepRow(method, m, seed, report.mae, report.xauc,
                                 report.xgauc, wall))
            if verbose:
                print(f"{name}: xgauc={report.xgauc:.4f} mae={report.mae:.2f} "
                      f"({wall:.1f}s)")
        except Exception as e:  # record the failed cell, keep sweeping
            cell_dir.mkdir(parents=True, exist_ok=True)
            _dump_json({"error": f"{type(e).__name__}: {e}"}, error_path)
            rows.append(SweepRow(method, m, seed, float("nan"), float("nan"),
                                 float("nan"), float("nan"),
                                 error=f"{type(e).__name__}: {e}"))
            if verbose:
                print(f"{name}: FAILED ({e})")

    result = SweepResult(rows=rows)
    (run / "results.csv").write_text(result.to_csv(), encoding="utf-8")
    (run / "summary.md").write_text(
        summary_markdown(result, cfg.group_counts, cfg.methods), encoding="utf-8")
    (run / "xgauc_vs_groups.svg").write_text(
        xgauc_chart_svg(result, cfg.group_counts, cfg.methods), encoding="utf-8")
    return result
