"""Ablation grids over the baseline and multi-seed sensitivity sweeps."""
from __future__ import annotations

import csv
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

from ..errors import ConfigError
from ..losses import LossWeights
from ..trainer import EXPANDING, FULL_WINDOW, SLIDING
from ..vfnet import WRAPPERS
from .config import ExperimentConfig
from .experiment import generate_datasets, run_experiment

ARCHITECTURE = "Architecture"
TEMPORAL = "Temporal"
POSITIVITY = "Positivity"
KINDS = (ARCHITECTURE, TEMPORAL, POSITIVITY)

WIDTHS = (32, 64, 128, 256)
DEPTHS = (2, 3, 4, 5, 6)

# tested ranges per sensitivity knob
SENSITIVITY_RANGES = {
    "lambda_phys": (0.1, 100.0),
    "lr": (1e-4, 1e-2),
    "depth": (2, 6),
    "width": (32, 256),
    "batch": (64, 256),
}


@dataclass
class Cell:
    knobs: dict
    composite: float = math.nan
    report: dict = dc_field(default_factory=dict)
    error: str = ""

    @property
    def label(self):
        return "_".join(f"{k}-{v}" for k, v in self.knobs.items())


@dataclass
class SweepResult:
    kind: str
    cells: list

    def ranked(self):
        """Successful cells by composite, then failed ones; ties broken by knob labels."""
        def key(c):
            ok = math.isfinite(c.composite)
            return (not ok, c.composite if ok else 0.0, tuple(str(v) for v in c.knobs.values()))
        return sorted(self.cells, key=key)


def sweep_cells(kind, widths=WIDTHS, depths=DEPTHS):
    if kind == ARCHITECTURE:
        return [{"width": w, "depth": d} for w in widths for d in depths]
    if kind == TEMPORAL:
        return [{"sampling": s} for s in (EXPANDING, SLIDING, FULL_WINDOW)]
    if kind == POSITIVITY:
        return [{"wrapper": w} for w in WRAPPERS]
    raise ConfigError(f"unknown ablation kind {kind!r}; expected one of {KINDS}")


def _cell_config(base: ExperimentConfig, kind, knobs):
    if kind == ARCHITECTURE:
        train = dict(hidden=(knobs["width"],) * knobs["depth"])
    elif kind == TEMPORAL:
        train = dict(sampling=knobs["sampling"])
    else:
        train = dict(wrapper=knobs["wrapper"], wrapper_bound=None)
    cell = base.with_train(**train)
    label = "_".join(f"{k}-{v}" for k, v in knobs.items())
    return replace(cell, run_id=f"{kind.lower()}/{label}")


def _run_cell(args):
    cfg, kind, knobs = args
    cell = Cell(dict(knobs))
    try:
        res = run_experiment(cfg)
        cell.composite = res.report.composite
        cell.report = {**res.report.scalars(), "saturated": res.saturated}
    except Exception as err:  # recorded per cell; the sweep continues
        cell.error = f"{type(err).__name__}: {err}"
    return cell


def ablation_sweep(kind, base: ExperimentConfig, parallel=False, workers=None,
                   widths=WIDTHS, depths=DEPTHS) -> SweepResult:
    """Train one baseline network per grid cell with the shared seed and rank by composite."""
    if base.method != "NN":
        raise ConfigError("ablation sweeps run on the NN baseline only")
    generate_datasets(base)  # shared read-only inputs, written before any worker starts
    jobs = [(_cell_config(base, kind, knobs), kind, knobs)
            for knobs in sweep_cells(kind, widths, depths)]
    if parallel:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, jobs))
    else:
        cells = [_run_cell(job) for job in jobs]
    result = SweepResult(kind, cells)
    write_sweep(Path(base.out_dir) / kind.lower(), result)
    return result


def write_sweep(out_dir, result: SweepResult):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ranked = result.ranked()
    knob_names = list(ranked[0].knobs) if ranked else []
    cols = ["rank"] + knob_names + ["mse_in", "mse_oos", "mse_long", "h_drift_rel",
                                    "composite", "saturated", "error"]
    rows = []
    for rank, cell in enumerate(ranked, 1):
        rep = cell.report
        rows.append([rank] + [cell.knobs[k] for k in knob_names]
                    + [repr(rep.get(k, math.nan)) for k in cols[1 + len(knob_names):-2]]
                    + [rep.get("saturated", ""), cell.error])
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        w.writerows(rows)
    (out / "sweep.txt").write_text(_aligned([cols] + [[str(v) for v in r] for r in rows]))


def _aligned(table):
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    return "\n".join("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip()
                     for row in table) + "\n"


def _sensitivity_config(base: ExperimentConfig, knob, value):
    t = base.train
    if knob == "lambda_phys":
        w = t.weights
        change = dict(weights=LossWeights(float(value), w.lambda_cont, w.lambda_reg))
    elif knob == "lr":
        change = dict(lr_max=float(value), lr_min=min(t.lr_min, float(value)))
    elif knob == "depth":
        change = dict(hidden=(t.hidden[0],) * int(value))
    elif knob == "width":
        change = dict(hidden=(int(value),) * len(t.hidden))
    elif knob == "batch":
        change = dict(ics_per_epoch=int(value))
    else:
        raise ConfigError(f"unknown sensitivity knob {knob!r}")
    return base.with_train(**change)


@dataclass
class SensitivityRow:
    value: float
    mean: float
    std: float
    values: list


def sensitivity_sweep(knob, values, seeds, base: ExperimentConfig, check_range=True):
    """Mean and population std of best validation MSE across seeds, per knob value."""
    if knob not in SENSITIVITY_RANGES:
        raise ConfigError(f"unknown sensitivity knob {knob!r}")
    lo, hi = SENSITIVITY_RANGES[knob]
    if check_range and any(not lo <= v <= hi for v in values):
        raise ConfigError(f"{knob} values must lie in [{lo}, {hi}]")
    if not seeds:
        raise ConfigError("need at least one seed")
    rows = []
    for value in values:
        vals = []
        for seed in seeds:
            cfg = _sensitivity_config(base, knob, value).with_train(seed=seed)
            cfg = replace(cfg, run_id=f"sensitivity/{knob}-{value!r}/seed{seed}")
            res = run_experiment(cfg)
            vals.append(float(res.report.breakdown["best_val_mse"]))
        std = statistics.pstdev(vals) if len(vals) > 1 else 0.0
        rows.append(SensitivityRow(float(value), statistics.fmean(vals), std, vals))
    out = Path(base.out_dir) / "sensitivity"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{knob}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([knob, "mean_val_mse", "std_val_mse", "n_seeds"])
        for r in rows:
            w.writerow([repr(r.value), repr(r.mean), repr(r.std), len(r.values)])
    return rows
