"""One experiment end to end: datasets, training, evaluation, artifacts on disk."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

from .. import evaluation, systems, vfnet
from ..sampling import MIXED_EDGE, TYPICAL_UNIFORM, ICSamplerSpec
from ..trainer import fit_structured, relative_errors, save_best, train, write_history
from .config import ExperimentConfig, dump_config

CHECKPOINT = "checkpoint.txt"
HISTORY = "history.csv"
REPORT = "report.json"
SERIES = "series"
CONFIG_COPY = "config.ini"
STRUCTURED_FIT_TRAJECTORIES = 8


def dataset_path(cfg: ExperimentConfig, regime):
    n = cfg.eval_typical if regime == "typical" else cfg.eval_mixed
    seed = cfg.data_seed_typical if regime == "typical" else cfg.data_seed_mixed
    return Path(cfg.out_dir) / "datasets" / f"{regime}_n{n}_seed{seed}.txt"


def load_or_generate(cfg: ExperimentConfig, regime):
    """Held-out evaluation set; generated once per (regime, size, seed) and reused."""
    path = dataset_path(cfg, regime)
    if path.exists():
        return evaluation.load_dataset(path)
    mode = TYPICAL_UNIFORM if regime == "typical" else MIXED_EDGE
    n = cfg.eval_typical if regime == "typical" else cfg.eval_mixed
    seed = cfg.data_seed_typical if regime == "typical" else cfg.data_seed_mixed
    ds = evaluation.generate_dataset(ICSamplerSpec(mode), n, seed, cfg.system,
                                     cfg.train.solver_eval)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    evaluation.save_dataset(tmp, ds)
    tmp.replace(path)
    return evaluation.load_dataset(path)


def generate_datasets(cfg: ExperimentConfig):
    return load_or_generate(cfg, "typical"), load_or_generate(cfg, "mixed")


@dataclass
class ExperimentResult:
    report: evaluation.MetricsReport
    run_dir: Path
    saturated: int = 0


def write_report(path, cfg: ExperimentConfig, report: evaluation.MetricsReport):
    payload = {"method": cfg.method, "seed": cfg.seed, **json.loads(report.to_json())}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_report(path):
    data = json.loads(Path(path).read_text())
    return data


def evaluate_field(cfg: ExperimentConfig, field, run_dir, datasets=None):
    typical, mixed = datasets or generate_datasets(cfg)
    return evaluation.three_axis_report(field, typical, mixed, Path(run_dir) / SERIES,
                                        cfg.train.solver_eval)


def _run_structured(cfg: ExperimentConfig, run_dir, datasets):
    t = cfg.train
    fit_data = evaluation.generate_dataset(ICSamplerSpec(t.sampler), STRUCTURED_FIT_TRAJECTORIES,
                                           t.seed, cfg.system, t.solver_eval)
    fitted, history = fit_structured(fit_data.states, lr=t.lr_max, epochs=t.epochs,
                                     true_params=cfg.system)
    with open(run_dir / HISTORY, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss"])
        for epoch, loss in enumerate(history):
            w.writerow([epoch, repr(float(loss))])
    lines = [f"system = {fitted.system}"] + [f"{k} = {v!r}" for k, v in fitted.as_dict().items()]
    (run_dir / CHECKPOINT).write_text("\n".join(lines) + "\n")
    report = evaluate_field(cfg, systems.SystemField(fitted), run_dir, datasets)
    report.breakdown["fitted_params"] = fitted.as_dict()
    report.breakdown["relative_errors"] = relative_errors(fitted, cfg.system)
    return report, 0


def run_experiment(cfg: ExperimentConfig, datasets=None, progress=None) -> ExperimentResult:
    """Train (or fit) the configured method, evaluate it, and write every artifact.

    Files in ``cfg.run_dir``: config copy, checkpoint, history CSV, report JSON
    and the plot series directory.
    """
    run_dir = cfg.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / CONFIG_COPY).write_text(dump_config(cfg))
    datasets = datasets or generate_datasets(cfg)
    if cfg.method == "Structured":
        report, saturated = _run_structured(cfg, run_dir, datasets)
    else:
        result = train(cfg.train, cfg.system, progress=progress)
        save_best(run_dir / CHECKPOINT, result, cfg.seed)
        write_history(run_dir / HISTORY, result.history)
        field = vfnet.MLPField(result.spec, result.theta)
        report = evaluate_field(cfg, field, run_dir, datasets)
        saturated = result.saturated + report.breakdown["saturated_eval"]
        report.breakdown["best_epoch"] = result.best_epoch
        report.breakdown["best_val_mse"] = result.best_val
        report.breakdown["saturated_train"] = result.saturated
    report.breakdown["saturated_total"] = saturated
    write_report(run_dir / REPORT, cfg, report)
    return ExperimentResult(report, run_dir, saturated)


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint=None):
    """Re-evaluate a saved network checkpoint and rewrite the report next to it."""
    path = Path(checkpoint) if checkpoint else cfg.run_dir / CHECKPOINT
    spec, theta, meta = vfnet.load_checkpoint(path)
    run_dir = path.parent
    report = evaluate_field(cfg, vfnet.MLPField(spec, theta), run_dir)
    report.breakdown["best_epoch"] = meta["epoch"]
    report.breakdown["best_val_mse"] = meta["val_mse"]
    write_report(run_dir / REPORT, cfg, report)
    return report
