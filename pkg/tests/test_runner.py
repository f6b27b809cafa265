import csv
import json

import numpy as np
import pytest

from mpinode.errors import ConfigError, DivergenceError, TrainingCollapse
from mpinode.runner import cli
from mpinode.runner.config import OUT_ENV, dump_config, load_config, parse_sections
from mpinode.runner.experiment import (
    CHECKPOINT,
    HISTORY,
    REPORT,
    SERIES,
    evaluate_checkpoint,
    run_experiment,
)
from mpinode.runner.report import COLUMNS, collect_reports, emit_report
from mpinode.runner.sweeps import (
    ARCHITECTURE,
    POSITIVITY,
    TEMPORAL,
    ablation_sweep,
    sensitivity_sweep,
    sweep_cells,
)

TINY = """\
# smoke-sized experiment
[experiment]
method = {method}
seed = 4
eval_typical = 2
eval_mixed = 2

[train]
epochs = {epochs}
ics_per_epoch = 2
t_train = 2.0
n_val = 2

[net]
hidden = 8, 8
"""


def tiny_config(tmp_path, method="NN", epochs=10, extra="", name="exp.ini"):
    path = tmp_path / name
    path.write_text(TINY.format(method=method, epochs=epochs) + extra)
    return path


# configuration parsing

def test_parse_defaults_to_preset(tmp_path):
    cfg = load_config(tiny_config(tmp_path), out=str(tmp_path / "runs"))
    assert cfg.method == "NN" and cfg.seed == 4
    assert cfg.train.hidden == (8, 8) and cfg.train.K == 1
    assert cfg.run_dir == tmp_path / "runs" / "NN_seed4"


def test_empty_config_is_full_scale_mpi():
    cfg = load_config(None)
    assert cfg.method == "MPI" and cfg.train.epochs == 3000 and cfg.eval_typical == 16


def test_desk_scale_flag():
    cfg = load_config(None, scale="desk", method="NN")
    assert (cfg.train.epochs, cfg.train.ics_per_epoch, cfg.eval_typical, cfg.eval_mixed) \
        == (600, 32, 8, 8)
    assert load_config(None, scale="desk", method="MIC").train.ics_per_epoch == 64


@pytest.mark.parametrize("text,line", [
    ("[train]\nepochs = 5\nbogus = 1\n", 3),
    ("[train]\nepochs = five\n", 2),
    ("[nope]\n", 1),
    ("[train]\nepochs 5\n", 2),
    ("[train]\nepochs = 1\nepochs = 2\n", 3),
    ("method = Unknown\n", 1),
    ("# header\n\n[weights]\nlambda_phys = 1\n[train]\nsampling = Diagonal\n", 6),
])
def test_config_errors_carry_line_numbers(tmp_path, text, line):
    p = tmp_path / "bad.ini"
    p.write_text(text)
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.line == line
    assert str(info.value).startswith(f"line {line}:")


def test_missing_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_dump_round_trip(tmp_path):
    cfg = load_config(tiny_config(tmp_path, "MPI"), out=str(tmp_path))
    again = tmp_path / "again.ini"
    again.write_text(dump_config(cfg))
    back = load_config(again, out=str(tmp_path))
    assert back.train == cfg.train and back.system == cfg.system


def test_out_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "env"))
    assert load_config(None).out_dir == str(tmp_path / "env")
    assert load_config(None, out="flag").out_dir == "flag"


def test_comments_and_blank_lines_ignored():
    sections = parse_sections("# c\n\n[train]  # trailing\nepochs = 3 # why\n")
    assert sections["train"]["epochs"] == ("3", 4)


# end-to-end runs

@pytest.fixture(scope="module")
def smoke(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    cfg = load_config(tiny_config(root), out=str(root / "runs"))
    return cfg, run_experiment(cfg)


def test_smoke_run_writes_artifacts(smoke):
    cfg, res = smoke
    for name in (CHECKPOINT, HISTORY, REPORT):
        assert (res.run_dir / name).is_file()
    assert (res.run_dir / SERIES / "cumulative_mse.csv").is_file()
    assert len(list((res.run_dir / SERIES).glob("phase_*.csv"))) == 2
    rows = list(csv.reader(open(res.run_dir / HISTORY)))
    assert len(rows) == 11
    report = json.loads((res.run_dir / REPORT).read_text())
    assert report["method"] == "NN" and report["seed"] == 4
    assert np.isfinite(report["composite"])


def test_rerun_is_byte_identical(smoke, tmp_path):
    cfg, res = smoke
    first = {n: (res.run_dir / n).read_bytes() for n in (REPORT, HISTORY, CHECKPOINT)}
    run_experiment(cfg)
    for n, data in first.items():
        assert (res.run_dir / n).read_bytes() == data


def test_evaluate_checkpoint_reproduces_report(smoke):
    cfg, res = smoke
    rep = evaluate_checkpoint(cfg)
    assert rep.scalars() == res.report.scalars()


def test_structured_run_reports_parameters(tmp_path):
    cfg = load_config(tiny_config(tmp_path, "Structured", epochs=3000), out=str(tmp_path))
    res = run_experiment(cfg)
    fitted = res.report.breakdown["fitted_params"]
    assert set(fitted) == {"alpha", "beta", "gamma", "delta"}
    assert max(res.report.breakdown["relative_errors"].values()) < 1e-3


# CLI

def test_cli_train_and_report(tmp_path, capsys):
    cfg = tiny_config(tmp_path, epochs=2)
    out = str(tmp_path / "runs")
    assert cli.main(["train", "--config", str(cfg), "--out", out]) == 0
    assert cli.main(["train", "--config", str(cfg), "--out", out, "--method", "PINN"]) == 0
    assert cli.main(["report", "--out", out]) == 0
    text = capsys.readouterr().out
    assert "LV_NN" in text and "LV_PINN" in text
    assert cli.main(["evaluate", "--config", str(cfg), "--out", out]) == 0


def test_cli_generate(tmp_path):
    cfg = tiny_config(tmp_path)
    assert cli.main(["generate", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    assert len(list((tmp_path / "datasets").glob("*.txt"))) == 2


def test_cli_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[train]\nepochs = -\n")
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert "line 2" in capsys.readouterr().err


@pytest.mark.parametrize("exc,code", [(TrainingCollapse("all failed", 3), 3),
                                      (DivergenceError("budget", 1.0), 4)])
def test_cli_failure_exit_codes(tmp_path, monkeypatch, exc, code):
    def boom(*a, **k):
        raise exc

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["train", "--config", str(tiny_config(tmp_path)), "--out", str(tmp_path)]) \
        == code


def test_cli_sweep_needs_knob(tmp_path):
    assert cli.main(["sweep", "--config", str(tiny_config(tmp_path)), "--out", str(tmp_path)]) == 2


# reports

def test_emit_report_order_and_values(tmp_path):
    rows = [{"method": m, "seed": 0, "mse_in": i + 0.5, "mse_oos": 0.25, "mse_long": 0.25,
             "h_drift_rel": 1e-3, "composite": 0.1 * (i + 1)}
            for i, m in enumerate(["Structured", "MPI", "MIC", "PINN", "NN"])]
    path = emit_report(rows, tmp_path)
    table = list(csv.DictReader(open(path)))
    assert [r["method"] for r in table] == ["NN", "PINN", "MIC", "MPI", "Structured"]
    assert list(table[0]) == list(COLUMNS)
    assert float(table[0]["mse_in"]) == 4.5
    single = emit_report(rows[:1], tmp_path / "one")
    assert len(list(csv.DictReader(open(single)))) == 1


def test_report_values_copied_from_files(smoke):
    cfg, res = smoke
    reports = collect_reports(cfg.out_dir)
    path = emit_report(reports, cfg.out_dir)
    row = next(csv.DictReader(open(path)))
    on_disk = json.loads((res.run_dir / REPORT).read_text())
    for c in COLUMNS[2:]:
        assert float(row[c]) == on_disk[c]


# sweeps

def test_sweep_cell_counts():
    assert len(sweep_cells(ARCHITECTURE)) == 20
    assert len(sweep_cells(TEMPORAL)) == 3
    assert len(sweep_cells(POSITIVITY)) == 4
    with pytest.raises(ConfigError):
        sweep_cells("Other")


def test_ablation_requires_baseline(tmp_path):
    cfg = load_config(tiny_config(tmp_path, "MPI"), out=str(tmp_path))
    with pytest.raises(ConfigError):
        ablation_sweep(TEMPORAL, cfg)


def _sweep_base(tmp_path, epochs=1, t_train=6.0):
    tmp_path.mkdir(parents=True, exist_ok=True)
    cfg = load_config(tiny_config(tmp_path, "NN", epochs), out=str(tmp_path))
    return cfg.with_train(t_train=t_train)


def test_temporal_sweep_rows(tmp_path):
    res = ablation_sweep(TEMPORAL, _sweep_base(tmp_path))
    assert len(res.cells) == 3 and not any(c.error for c in res.cells)
    rows = list(csv.DictReader(open(tmp_path / "temporal" / "sweep.csv")))
    assert len(rows) == 3
    assert [int(r["rank"]) for r in rows] == [1, 2, 3]
    comps = [float(r["composite"]) for r in rows]
    assert comps == sorted(comps)


def test_architecture_sweep_rows(tmp_path):
    res = ablation_sweep(ARCHITECTURE, _sweep_base(tmp_path, t_train=2.0))
    assert len(res.cells) == 20
    assert len(list(csv.DictReader(open(tmp_path / "architecture" / "sweep.csv")))) == 20
    assert {(c.knobs["width"], c.knobs["depth"]) for c in res.cells} == \
        {(w, d) for w in (32, 64, 128, 256) for d in range(2, 7)}


def test_positivity_parallel_matches_sequential(tmp_path):
    seq = ablation_sweep(POSITIVITY, _sweep_base(tmp_path / "seq", t_train=2.0))
    par = ablation_sweep(POSITIVITY, _sweep_base(tmp_path / "par", t_train=2.0), parallel=True,
                         workers=2)
    assert len(seq.cells) == len(par.cells) == 4
    assert (tmp_path / "seq" / "positivity" / "sweep.csv").read_bytes() == \
        (tmp_path / "par" / "positivity" / "sweep.csv").read_bytes()
    for cell in ("wrapper-none", "wrapper-clamp", "wrapper-squared", "wrapper-tanh_bound"):
        for name in (REPORT, HISTORY):
            a = tmp_path / "seq" / "positivity" / cell / name
            b = tmp_path / "par" / "positivity" / cell / name
            assert a.read_bytes() == b.read_bytes()


def test_ranking_ties_broken_by_knobs():
    from mpinode.runner.sweeps import Cell, SweepResult
    cells = [Cell({"wrapper": "b"}, 1.0), Cell({"wrapper": "a"}, 1.0),
             Cell({"wrapper": "c"}, error="boom"), Cell({"wrapper": "d"}, 0.5)]
    assert [c.knobs["wrapper"] for c in SweepResult("x", cells).ranked()] == ["d", "a", "b", "c"]


def test_sensitivity_rows(tmp_path):
    base = load_config(tiny_config(tmp_path, "MPI", epochs=1), out=str(tmp_path))
    base = base.with_train(t_train=2.0, K=2)
    rows = sensitivity_sweep("lambda_phys", [0.1, 1.0, 10.0, 100.0], [0], base)
    assert len(rows) == 4 and all(r.std == 0.0 for r in rows)
    table = list(csv.DictReader(open(tmp_path / "sensitivity" / "lambda_phys.csv")))
    assert len(table) == 4 and set(table[0]) >= {"mean_val_mse", "std_val_mse"}
    two = sensitivity_sweep("lr", [1e-4, 1e-2], [0, 1], base)
    assert all(r.std > 0 for r in two)
    with pytest.raises(ConfigError):
        sensitivity_sweep("lr", [1.0], [0], base)
    with pytest.raises(ConfigError):
        sensitivity_sweep("momentum", [1.0], [0], base)
