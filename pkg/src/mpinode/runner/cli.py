"""Command-line entry point.

    mpinode generate --config exp.ini
    mpinode train    --config exp.ini --seed 1 --scale desk
    mpinode evaluate --config exp.ini [--checkpoint PATH]
    mpinode ablate   --config exp.ini --kind Positivity
    mpinode sweep    --config exp.ini --knob lambda_phys --values 0.1,1,10,100 --seeds 0,1,2
    mpinode report   --out runs

Exit status: 0 success, 2 configuration error, 3 training collapse,
4 solver divergence during evaluation.
"""
from __future__ import annotations

import argparse
import logging
import sys

from ..errors import ConfigError, ContractError, SolverError, TrainingCollapse
from .config import load_config
from .experiment import evaluate_checkpoint, generate_datasets, run_experiment
from .report import collect_reports, emit_report
from .sweeps import KINDS, ablation_sweep, sensitivity_sweep

EXIT_OK, EXIT_CONFIG, EXIT_COLLAPSE, EXIT_DIVERGENCE = 0, 2, 3, 4

log = logging.getLogger("mpinode")


def _common(p):
    p.add_argument("--config", help="experiment config file")
    p.add_argument("--seed", type=int, help="override the training seed")
    p.add_argument("--out", help="output root (else $MPINODE_OUT or the config value)")
    p.add_argument("--scale", choices=("full", "desk"), help="full or desk-scale preset")
    p.add_argument("--method", help="override the method preset")


def build_parser():
    ap = argparse.ArgumentParser(prog="mpinode", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("generate", help="write the held-out evaluation datasets"))
    _common(sub.add_parser("train", help="train, evaluate and write all run artifacts"))
    p = sub.add_parser("evaluate", help="re-evaluate a saved checkpoint")
    _common(p)
    p.add_argument("--checkpoint")
    p = sub.add_parser("ablate", help="phase-1 ablation grid on the baseline")
    _common(p)
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--parallel", action="store_true")
    p.add_argument("--workers", type=int)
    p = sub.add_parser("sweep", help="multi-seed sensitivity sweep")
    _common(p)
    p.add_argument("--knob")
    p.add_argument("--values", help="comma-separated knob values")
    p.add_argument("--seeds", help="comma-separated seeds")
    _common(sub.add_parser("report", help="comparison table over every report under --out"))
    return ap


def _config(args):
    return load_config(args.config, seed=args.seed, out=args.out, scale=args.scale,
                       method=args.method)


def _progress(row):
    if row["epoch"] % 50 == 0:
        log.info("epoch %d loss %.4g val %.4g dropped %d", row["epoch"], row["loss_total"],
                 row["val_mse"], row["dropped_ics"])


def dispatch(args):
    cfg = _config(args)
    if args.command == "generate":
        typical, mixed = generate_datasets(cfg)
        print(f"datasets: {len(typical)} typical, {len(mixed)} mixed under {cfg.out_dir}/datasets")
    elif args.command == "train":
        res = run_experiment(cfg, progress=_progress)
        print(f"{cfg.run_name}: " + " ".join(f"{k}={v:.6g}" for k, v in res.report.scalars().items()))
    elif args.command == "evaluate":
        rep = evaluate_checkpoint(cfg, args.checkpoint)
        print(" ".join(f"{k}={v:.6g}" for k, v in rep.scalars().items()))
    elif args.command == "ablate":
        kind = args.kind or cfg.sweep.get("kind")
        if kind not in KINDS:
            raise ConfigError(f"ablation kind must be one of {KINDS}")
        parallel = args.parallel or cfg.sweep.get("parallel", False)
        res = ablation_sweep(kind, cfg, parallel=parallel,
                             workers=args.workers or cfg.sweep.get("workers"))
        for cell in res.ranked():
            print(cell.label, cell.composite, cell.error)
    elif args.command == "sweep":
        knob = args.knob or cfg.sweep.get("knob")
        values = ([float(v) for v in args.values.split(",")] if args.values
                  else list(cfg.sweep.get("values", ())))
        seeds = ([int(s) for s in args.seeds.split(",")] if args.seeds
                 else list(cfg.sweep.get("seeds", (cfg.seed,))))
        if not knob or not values:
            raise ConfigError("sweep needs a knob and at least one value")
        for row in sensitivity_sweep(knob, values, seeds, cfg):
            print(f"{knob}={row.value:g} mean={row.mean:.6g} std={row.std:.6g}")
    elif args.command == "report":
        path = emit_report(collect_reports(cfg.out_dir), cfg.out_dir)
        print(path.with_suffix(".txt").read_text(), end="")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(message)s")
    try:
        return dispatch(args)
    except (ConfigError, ContractError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingCollapse as err:
        print(f"training collapse: {err}", file=sys.stderr)
        return EXIT_COLLAPSE
    except SolverError as err:
        print(f"solver divergence during evaluation: {err}", file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
