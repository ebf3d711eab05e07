"""Experiment orchestration: data loading, model construction, runs, sweeps and report files."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from .classical import ClassicalGNN, classical_parameter_count
from .config import ConfigError, ExperimentConfig, format_config, load_config, parse_config
from .data import (
    CACHE_MAGIC,
    DatasetSplit,
    build_dataset,
    featurize_jet,
    read_cache,
    read_jsonl,
    rescale,
    select_jets,
    split_featured,
    synth_jets,
    unscale,
)
from .nn import set_flat
from .quantum import QuantumGNN, quantum_parameter_count
from .training import TrainReport, evaluate, init_rng, load_checkpoint, save_checkpoint, train_model

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "val_loss", "train_acc", "val_acc", "val_auc")
SWEEP_COLUMNS = ("config", "model", "n_params", "test_auc", "status")
SWEEP_TARGETS = (500, 1200, 1600, 2800, 3500, 5100)


def fmt(value) -> str:
    """17 significant digits, so a CSV re-parse gives back the same double."""
    if value is None:
        return "nan"
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return f"{float(value):.17g}"


def build_model(cfg: ExperimentConfig):
    cfg = cfg.validate()
    rng = init_rng(cfg.seed)
    if cfg.quantum:
        return QuantumGNN(layers=cfg.layers, n_nodes=cfg.n_nodes, encoder_hidden=cfg.encoder_hidden,
                          decoder_hidden=cfg.decoder_hidden, pooled=cfg.model == "eqgnn",
                          squared_modulus=cfg.squared_modulus, rng=rng, activation=cfg.activation)
    return ClassicalGNN(hidden=cfg.hidden, layers=cfg.layers, equivariant=cfg.model == "egnn", rng=rng,
                        activation=cfg.activation)


def is_cache(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(CACHE_MAGIC)) == CACHE_MAGIC


def load_dataset(cfg: ExperimentConfig) -> DatasetSplit:
    cfg = cfg.validate()
    dcfg = cfg.data_config()
    if cfg.data:
        if is_cache(cfg.data):
            jets, scale = read_cache(cfg.data)
            if jets and jets[0].n_nodes != cfg.n_nodes:
                raise ConfigError(f"cache holds {jets[0].n_nodes}-node jets, config asks for {cfg.n_nodes}")
            return split_featured(unscale(jets, scale), dcfg)
        return build_dataset(read_jsonl(cfg.data), dcfg)
    return build_dataset(synth_jets(cfg.synth_n, cfg.synth_seed, cfg.synth_config()), dcfg)


def _run_dir(root: Path, cfg: ExperimentConfig) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = root / f"{cfg.model}-{stamp}-s{cfg.seed}"
    path, i = base, 1
    while path.exists():
        path = Path(f"{base}-{i}")
        i += 1
    path.mkdir(parents=True)
    return path


def write_history(report: TrainReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for rec in report.history:
            w.writerow([fmt(getattr(rec, c)) for c in HISTORY_COLUMNS])


def write_roc(report: TrainReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("fpr", "tpr"))
        for f, t in zip(report.roc_fpr, report.roc_tpr):
            w.writerow((fmt(f), fmt(t)))


def run_experiment(cfg: ExperimentConfig, output_dir=None):
    """Train one configuration and write its report files; returns ``(run_dir, report)``."""
    cfg = cfg.validate()
    data = load_dataset(cfg)
    model = build_model(cfg)
    report = train_model(model, data, cfg.train_config())
    run_dir = _run_dir(Path(output_dir or cfg.output_dir), cfg)
    text = format_config(cfg)
    (run_dir / "config.txt").write_text(text)
    (run_dir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, allow_nan=True))
    write_history(report, run_dir / "history.csv")
    write_roc(report, run_dir / "roc.csv")
    save_checkpoint(run_dir / "checkpoint.qjck", report.best_params, report.best_epoch, text, data.scale)
    return run_dir, report


def evaluate_checkpoint(checkpoint_path, data_path) -> dict:
    """Score every selectable jet in ``data_path`` with a saved model."""
    ckpt = load_checkpoint(checkpoint_path)
    cfg = parse_config(ckpt.config_text).validate()
    model = build_model(cfg)
    set_flat(model.parameters(), ckpt.params)
    if is_cache(data_path):
        jets, scale = read_cache(data_path)
        featured = unscale(jets, scale)
    else:
        kept = select_jets(read_jsonl(data_path), cfg.min_particles)
        featured = [featurize_jet(j, cfg.n_nodes, cfg.wrap_phi) for j in kept]
    if not featured:
        raise ConfigError(f"no usable jets in {data_path}")
    result = evaluate(model, rescale(featured, ckpt.scale))
    return {"model": cfg.model, "epoch": ckpt.epoch, "n_jets": len(featured), "loss": result.loss,
            "accuracy": result.accuracy, "auc": result.auc}


# ---------------------------------------------------------------------------
# parameter-count sweep
# ---------------------------------------------------------------------------

def parameter_count(cfg: ExperimentConfig) -> int:
    cfg = cfg.resolved()
    if cfg.quantum:
        return quantum_parameter_count(cfg.layers, cfg.encoder_hidden, cfg.decoder_hidden, cfg.model == "eqgnn",
                                       cfg.n_nodes)
    return classical_parameter_count(cfg.hidden, cfg.layers, cfg.model == "egnn")


def plan_sweep(base: ExperimentConfig, targets=SWEEP_TARGETS) -> list:
    """One config per target |Theta|, whichever candidate shape lands nearest.

    Classical models vary hidden width and depth; quantum models keep the
    8-dimensional state and vary encoder/decoder widths (and depth when
    the widths alone cannot get close).
    """
    base = base.resolved()
    if base.quantum:
        grid = [(p, e, d) for p in range(base.layers, 0, -1) for e in range(1, 257) for d in range(0, 513, 2)]
        counts = np.array([
            quantum_parameter_count(p, e, d, base.model == "eqgnn", base.n_nodes) for p, e, d in grid
        ])
        shape = lambda p, e, d: replace(base, layers=p, encoder_hidden=e, decoder_hidden=d)  # noqa: E731
    else:
        grid = [(k, p) for p in range(1, 9) for k in range(2, 65)]
        counts = np.array([classical_parameter_count(k, p, base.model == "egnn") for k, p in grid])
        shape = lambda k, p: replace(base, hidden=k, layers=p)  # noqa: E731
    return [shape(*grid[int(np.argmin(np.abs(counts - t)))]) for t in targets]


def write_sweep_configs(base: ExperimentConfig, directory, targets=SWEEP_TARGETS) -> list:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for target, cfg in zip(targets, plan_sweep(base, targets)):
        path = directory / f"{cfg.model}-{target:05d}.cfg"
        path.write_text(format_config(cfg))
        paths.append(path)
    return paths


def run_sweep(config_dir, output=None) -> list:
    """Train every ``*.cfg`` in ``config_dir``; failures are recorded, not raised."""
    config_dir = Path(config_dir)
    output = Path(output) if output else config_dir / "auc_vs_params.csv"
    rows = []
    for path in sorted(config_dir.glob("*.cfg")):
        row = {"config": path.name, "model": "", "n_params": "", "test_auc": math.nan, "status": "ok"}
        try:
            cfg = load_config(path).validate()
            row["model"] = cfg.model
            row["n_params"] = build_model(cfg).num_parameters()
            _, report = run_experiment(cfg)
            row["test_auc"] = report.test_auc
        except Exception as exc:  # noqa: BLE001 - a sweep records failures and moves on
            log.warning("sweep run %s failed: %s", path.name, exc)
            row["status"] = f"error: {type(exc).__name__}: {exc}"
        rows.append(row)
    with open(output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([row["config"], row["model"], row["n_params"], fmt(row["test_auc"]), row["status"]])
    return rows
