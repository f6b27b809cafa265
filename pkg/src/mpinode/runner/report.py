"""Cross-method comparison table in the method order of the headline results."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from ..errors import ContractError
from ..trainer import METHODS

COLUMNS = ("method", "seed", "mse_in", "mse_oos", "mse_long", "h_drift_rel", "composite")
DISPLAY = {"NN": "LV_NN", "PINN": "LV_PINN", "MIC": "LV_MIC", "MPI": "MPINeuralODE",
           "Structured": "LV_Structured"}


def collect_reports(root):
    """Every ``report.json`` below ``root`` as parsed dicts."""
    return [json.loads(p.read_text()) for p in sorted(Path(root).rglob("report.json"))]


def _order(row):
    method = row["method"]
    rank = METHODS.index(method) if method in METHODS else len(METHODS)
    return rank, method, row["seed"]


def emit_report(results, out_dir):
    """Write ``comparison.csv`` and an aligned ``comparison.txt``; returns the CSV path.

    ``results`` are report dicts carrying ``method``, ``seed`` and the scalar
    fields; values are copied, never recomputed.
    """
    rows = sorted(results, key=_order)
    if not rows:
        raise ContractError("need at least one method result")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "comparison.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in rows:
            w.writerow([r["method"], r["seed"]] + [_num(r.get(c)) for c in COLUMNS[2:]])
    table = [["Method", "seed", "in MSE", "OOS MSE", "long MSE", "rel. H drift", "composite"]]
    for r in rows:
        table.append([DISPLAY.get(r["method"], r["method"]), str(r["seed"])]
                     + [_fmt(r.get(c)) for c in COLUMNS[2:]])
    widths = [max(len(row[i]) for row in table) for i in range(len(table[0]))]
    text = "\n".join("  ".join(v.rjust(w) if i > 1 else v.ljust(w)
                               for i, (v, w) in enumerate(zip(row, widths))).rstrip()
                     for row in table)
    (out / "comparison.txt").write_text(text + "\n")
    return path


def _num(v):
    return "nan" if v is None else repr(float(v))


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "n/a"
    return f"{float(v):.4g}"
