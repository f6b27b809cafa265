"""Experiment harness: config files, experiment runs, sweeps, reports and the CLI."""
from .config import ExperimentConfig, build_config, dump_config, load_config, parse_sections
from .experiment import ExperimentResult, evaluate_checkpoint, generate_datasets, run_experiment
from .report import collect_reports, emit_report
from .sweeps import (
    ARCHITECTURE,
    KINDS,
    POSITIVITY,
    TEMPORAL,
    SweepResult,
    ablation_sweep,
    sensitivity_sweep,
    sweep_cells,
)
