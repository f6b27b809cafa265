"""Ground-truth datasets and the three-axis evaluation harness.

Axes: in-sample MSE (typical-regime ICs), out-of-sample MSE (mixed-sampler
ICs), long-horizon MSE (cumulative error over the full mixed-set horizon) and
relative Hamiltonian drift. The composite used to rank ablations is the
geometric mean of the three MSE axes.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import systems
from .errors import ContractError, DomainError, SolverError
from .sampling import ICSamplerSpec, regime_tags, sample_ics
from .solver import EVAL_SOLVER, SolverConfig, integrate

DATA_T_END = 30.0
DATA_DT = 0.1
# stream offset for dataset ICs; the trainer owns offsets 1-3
STREAM_DATASET = 11


def data_grid(t_end=DATA_T_END, dt=DATA_DT):
    n = int(round(t_end / dt))
    return np.round(dt * np.arange(n + 1), 12)


@dataclass
class Dataset:
    """Ground-truth trajectories on one shared grid; ``states`` is ``(n_traj, n_t, d)``."""

    params: systems.SystemParams
    times: np.ndarray
    states: np.ndarray
    regimes: list
    seed: int
    rtol: float
    atol: float
    sampler: str = ""
    regenerated: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim != 3 or self.states.shape[1] != self.times.size:
            raise ContractError("states must be (n_traj, n_times, dim) on the shared grid")
        if len(self.regimes) != self.states.shape[0]:
            raise ContractError("one regime tag per trajectory")

    @property
    def ics(self):
        return self.states[:, 0, :]

    def __len__(self):
        return self.states.shape[0]

    def restrict(self, horizon):
        """Grid indices covering ``[0, horizon]``."""
        if not 0 < horizon <= self.times[-1] + 1e-12:
            raise ContractError(f"horizon must lie in (0, {self.times[-1]}]")
        return int(np.searchsorted(self.times, horizon + 1e-9, side="right"))


def _one_ic(spec, regime, rng):
    if regime == "typical":
        return rng.uniform(spec.uniform_lo, spec.uniform_hi, size=spec.dim)
    lo, hi = np.log10(spec.loguniform_lo), np.log10(spec.loguniform_hi)
    return 10.0 ** rng.uniform(lo, hi, size=spec.dim)


def generate_dataset(spec: ICSamplerSpec, n_traj: int, seed: int, params=None,
                     cfg: SolverConfig = EVAL_SOLVER, t_end=DATA_T_END, dt=DATA_DT) -> Dataset:
    """Integrate ``n_traj`` sampled ICs at ``cfg``; failed ICs are redrawn from the same stream."""
    if n_traj < 1:
        raise ContractError("need at least one trajectory")
    params = params or systems.lotka_volterra()
    rng = np.random.default_rng([seed, STREAM_DATASET])
    grid = data_grid(t_end, dt)
    field = systems.SystemField(params)
    ics = sample_ics(spec, n_traj, rng)
    regimes = regime_tags(spec, n_traj)
    states, regenerated = [], 0
    for ic, regime in zip(ics, regimes):
        while True:
            try:
                states.append(integrate(field, ic, grid, cfg).states)
                break
            except SolverError:
                regenerated += 1
                ic = _one_ic(spec, regime, rng)
    return Dataset(params, grid, np.stack(states), regimes, seed, cfg.rtol, cfg.atol,
                   spec.mode, regenerated)


def save_dataset(path, ds: Dataset):
    lines = [f"system = {ds.params.system}"]
    lines += [f"{k} = {v!r}" for k, v in ds.params.as_dict().items()]
    lines += [f"seed = {ds.seed}", f"rtol = {ds.rtol!r}", f"atol = {ds.atol!r}",
              f"sampler = {ds.sampler}", f"regenerated = {ds.regenerated}",
              f"n_traj = {len(ds)}"]
    names = ["t"] + ["x", "y", "z"][: ds.states.shape[2]]
    for i, regime in enumerate(ds.regimes):
        lines += ["", f"[trajectory {i}]", f"regime = {regime}", ",".join(names)]
        for t, row in zip(ds.times, ds.states[i]):
            lines.append(",".join(repr(float(v)) for v in (t, *row)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    header, blocks, current = {}, [], None
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("[trajectory"):
            current = {"regime": "", "rows": []}
            blocks.append(current)
        elif "=" in line:
            key, _, val = line.partition("=")
            (current if current is not None else header)[key.strip()] = val.strip()
        elif line[0].isalpha():
            continue
        else:
            current["rows"].append([float(v) for v in line.split(",")])
    system = header["system"]
    params = systems.SystemParams.from_dict(system, header)
    arrays = [np.array(b["rows"]) for b in blocks]
    if not arrays:
        raise ContractError(f"{path} holds no trajectories")
    return Dataset(params, arrays[0][:, 0], np.stack([a[:, 1:] for a in arrays]),
                   [b["regime"] for b in blocks], int(header["seed"]),
                   float(header["rtol"]), float(header["atol"]), header.get("sampler", ""),
                   int(header.get("regenerated", 0)))


# rollouts --------------------------------------------------------------------

def rollout(field, ic, times, cfg: SolverConfig = EVAL_SOLVER):
    """Model states on ``times`` with NaN rows after a solver failure.

    Returns ``(states, failed, saturated)``; the last counts raw network outputs
    beyond the wrapper bound (zero for analytic fields and failed rollouts).
    """
    out = np.full((len(times), np.size(ic)), np.nan)
    try:
        traj = integrate(field, ic, times, cfg)
        out[:] = traj.states
        return out, False, traj.meta.get("saturated", 0)
    except SolverError as err:
        done = err.states if err.states is not None else np.empty((0, np.size(ic)))
        out[: len(done)] = done
        return out, True, 0


def squared_errors(pred, truth):
    """Per-time squared error; rows missing from a failed rollout cost ``|truth|^2``."""
    diff = np.where(np.isnan(pred), truth, pred - truth)
    return np.sum(diff * diff, axis=-1)


@dataclass
class RolloutErrors:
    per_ic: np.ndarray
    per_time: np.ndarray  # (n_ic, n_t) squared errors
    preds: np.ndarray
    failures: int
    saturated: int = 0

    @property
    def mse(self):
        return float(np.mean(self.per_ic))


def rollout_errors(field, dataset: Dataset, horizon=DATA_T_END,
                   cfg: SolverConfig = EVAL_SOLVER) -> RolloutErrors:
    n = dataset.restrict(horizon)
    times = dataset.times[:n]
    preds, sq, failures, saturated = [], [], 0, 0
    for truth in dataset.states:
        pred, failed, sat = rollout(field, truth[0], times, cfg)
        failures += failed
        saturated += sat
        preds.append(pred)
        sq.append(squared_errors(pred, truth[:n]))
    sq = np.array(sq)
    return RolloutErrors(sq.sum(axis=1) / n, sq, np.array(preds), failures, saturated)


def trajectory_mse(field, dataset: Dataset, horizon=DATA_T_END,
                   cfg: SolverConfig = EVAL_SOLVER) -> float:
    """Mean over dataset ICs of the per-trajectory MSE on ``[0, horizon]``."""
    return rollout_errors(field, dataset, horizon, cfg).mse


def cumulative_mse(per_time_errors):
    """Running sum of the IC-averaged squared error divided by the full point count.

    Non-decreasing in the horizon; its last entry is the full-horizon MSE.
    """
    sq = np.atleast_2d(per_time_errors)
    return np.cumsum(sq.mean(axis=0)) / sq.shape[1]


# Hamiltonian drift ------------------------------------------------------------

@dataclass
class DriftResult:
    mean: float
    per_ic: np.ndarray  # NaN where undefined
    series: np.ndarray  # (n_ic, n_t) relative drift, NaN where undefined
    preds: np.ndarray
    excluded_states: int
    undefined_ics: int


def relative_drift(params, states, h0):
    """``|H(z) - h0| / |h0|`` per state; NaN for states outside the positive orthant."""
    out = np.full(len(states), np.nan)
    ok = np.all(np.isfinite(states), axis=1) & np.all(states > 0, axis=1)
    if np.any(ok):
        out[ok] = np.abs(systems.hamiltonian(params, states[ok]) - h0) / abs(h0)
    return out


def hamiltonian_drift_details(field, ics, horizon=DATA_T_END, params=None,
                              cfg: SolverConfig = EVAL_SOLVER, dt=DATA_DT,
                              preds=None) -> DriftResult:
    """Drift per IC and per time; ``preds`` reuses rollouts already computed on the grid."""
    params = params or systems.lotka_volterra()
    ics = np.atleast_2d(np.asarray(ics, dtype=float))
    if np.any(ics <= 0):
        raise DomainError("drift needs strictly positive initial conditions")
    times = data_grid(horizon, dt)
    given = preds
    per_ic, series, preds, excluded, undefined = [], [], [], 0, 0
    for i, ic in enumerate(ics):
        pred = given[i] if given is not None else rollout(field, ic, times, cfg)[0]
        drift = relative_drift(params, pred, systems.hamiltonian(params, ic))
        excluded += int(np.count_nonzero(np.isnan(drift)))
        valid = drift[~np.isnan(drift)]
        if valid.size:
            per_ic.append(float(valid.mean()))
        else:
            per_ic.append(math.nan)
            undefined += 1
        series.append(drift)
        preds.append(pred)
    per_ic = np.array(per_ic)
    defined = per_ic[~np.isnan(per_ic)]
    mean = float(defined.mean()) if defined.size else math.nan
    return DriftResult(mean, per_ic, np.array(series), np.array(preds), excluded, undefined)


def hamiltonian_drift(field, ics, horizon=DATA_T_END, params=None,
                      cfg: SolverConfig = EVAL_SOLVER) -> float:
    """Time-averaged, then IC-averaged relative drift of H along model rollouts."""
    return hamiltonian_drift_details(field, ics, horizon, params, cfg).mean


def composite_metric(mse_in, mse_oos, mse_long):
    """Geometric mean of the three MSE axes."""
    vals = (mse_in, mse_oos, mse_long)
    if not all(v > 0 and math.isfinite(v) for v in vals):
        raise ContractError("composite needs three strictly positive finite MSE values")
    return math.exp(sum(math.log(v) for v in vals) / 3.0)


# reports ------------------------------------------------------------------------

@dataclass
class MetricsReport:
    mse_in: float
    mse_oos: float
    mse_long: float
    h_drift_rel: float
    composite: float
    breakdown: dict = dc_field(default_factory=dict)

    SCALARS = ("mse_in", "mse_oos", "mse_long", "h_drift_rel", "composite")

    def scalars(self):
        return {k: getattr(self, k) for k in self.SCALARS}

    def to_json(self):
        return json.dumps(_plain(asdict(self)), indent=2) + "\n"

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(**data)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _write_csv(path, header, columns):
    rows = [",".join(header)]
    for values in zip(*columns):
        rows.append(",".join(repr(float(v)) for v in values))
    Path(path).write_text("\n".join(rows) + "\n")


def three_axis_report(field, typical: Dataset, mixed: Dataset, out_dir=None,
                      cfg: SolverConfig = EVAL_SOLVER, horizon=DATA_T_END) -> MetricsReport:
    """Evaluate ``field`` on both held-out datasets; optionally write plot series."""
    ins = rollout_errors(field, typical, horizon, cfg)
    oos = rollout_errors(field, mixed, horizon, cfg)
    cumulative = cumulative_mse(oos.per_time)
    mse_long = float(np.mean(oos.per_ic))
    drift = hamiltonian_drift_details(field, mixed.ics, horizon, mixed.params, cfg,
                                      preds=oos.preds)
    mse_in, mse_oos = ins.mse, oos.mse
    try:
        composite = composite_metric(mse_in, mse_oos, mse_long)
    except ContractError:
        composite = math.nan
    breakdown = {
        "mse_in_per_ic": ins.per_ic, "mse_oos_per_ic": oos.per_ic,
        "drift_per_ic": drift.per_ic, "failures_in": ins.failures,
        "failures_oos": oos.failures, "drift_excluded_states": drift.excluded_states,
        "drift_undefined_ics": drift.undefined_ics,
        "saturated_eval": ins.saturated + oos.saturated,
    }
    report = MetricsReport(mse_in, mse_oos, mse_long, drift.mean, composite, breakdown)
    if out_dir is not None:
        write_series(out_dir, mixed, oos, cumulative, drift)
    return report


def write_series(out_dir, mixed: Dataset, oos: RolloutErrors, cumulative, drift: DriftResult):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = oos.preds.shape[1]
    times = mixed.times[:n]
    _write_csv(out / "cumulative_mse.csv", ["t", "cum_mse"], [times, cumulative])
    params = mixed.params
    for i, truth in enumerate(mixed.states):
        pred = oos.preds[i]
        _write_csv(out / f"phase_{i:02d}.csv", ["t", "x_pred", "y_pred", "x_true", "y_true"],
                   [times, pred[:, 0], pred[:, 1], truth[:n, 0], truth[:n, 1]])
        h_pred = np.full(n, np.nan)
        ok = ~np.isnan(drift.series[i])
        if np.any(ok):
            h_pred[ok] = systems.hamiltonian(params, drift.preds[i][ok])
        h_true = systems.hamiltonian(params, truth[:n])
        _write_csv(out / f"hamiltonian_{i:02d}.csv", ["t", "H_pred", "H_true", "drift_rel"],
                   [times, h_pred, h_true, drift.series[i]])
