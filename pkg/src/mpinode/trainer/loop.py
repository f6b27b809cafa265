"""The multiple-shooting training loop.

One epoch samples fresh initial conditions, integrates every IC over the active
window split into K segments (segment k > 0 starts from the detached predicted
end of segment k - 1), accumulates the weighted objective, clips the gradient
and takes one Adam step. Validation after the update decides the checkpoint.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field as dc_field, replace
from pathlib import Path

import numpy as np

from .. import systems, vfnet
from ..errors import ConfigError, SolverError, TrainingCollapse
from ..evaluation import rollout, squared_errors
from ..losses import (
    LossBreakdown,
    LossWeights,
    data_loss,
    data_loss_grad,
    physics_loss,
    physics_loss_and_grad,
    total_loss,
)
from ..sampling import MIXED_EDGE, TYPICAL_UNIFORM, ICSamplerSpec, sample_ics
from ..solver import EVAL_SOLVER, TRAIN_SOLVER, SolverConfig, integrate, integrate_recording
from .optim import OptimizerState, adam_step, clip_gradient, cosine_lr
from .schedules import FULL_WINDOW, STRATEGIES, segment_bounds, uniform_grid, window_schedule

METHODS = ("NN", "PINN", "MIC", "MPI", "Structured")

# random stream offsets, one generator per purpose
STREAM_ICS = 1
STREAM_VALIDATION = 2
STREAM_WINDOWS = 3

HISTORY_COLUMNS = ("epoch", "lr", "loss_total", "loss_data", "loss_phys", "loss_cont",
                   "loss_reg", "val_mse", "dropped_ics")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "MPI"
    epochs: int = 3000
    ics_per_epoch: int = 128
    K: int = 4
    weights: LossWeights = LossWeights()
    lr_max: float = 3e-3
    lr_min: float = 3e-4
    grad_clip: float = 10.0
    t_train: float = 30.0
    train_grid_dt: float = 0.1
    sampling: str = FULL_WINDOW
    seed: int = 0
    solver_train: SolverConfig = TRAIN_SOLVER
    solver_eval: SolverConfig = EVAL_SOLVER
    sampler: str = MIXED_EDGE
    hidden: tuple = (128, 128, 128)
    wrapper: str = "clamp"
    wrapper_bound: float | None = None
    n_val: int = 16

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.sampling not in STRATEGIES:
            raise ConfigError(f"unknown sampling strategy {self.sampling!r}")
        if self.epochs < 1 or self.ics_per_epoch < 1 or self.K < 1 or self.n_val < 1:
            raise ConfigError("epochs, ics_per_epoch, K and n_val must be at least 1")
        if self.lr_min > self.lr_max or self.lr_min < 0:
            raise ConfigError("need 0 <= lr_min <= lr_max")
        if self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive")
        if self.t_train <= 0 or self.train_grid_dt <= 0:
            raise ConfigError("t_train and train_grid_dt must be positive")

    @classmethod
    def preset(cls, method, scale="full", **overrides):
        """Shared settings plus the per-method IC budget, sampler, K and loss weights."""
        if method not in METHODS:
            raise ConfigError(f"unknown method {method!r}; expected one of {METHODS}")
        lam = LossWeights()
        typical = method in ("NN", "PINN")
        kw = dict(method=method, K=1 if typical else 4,
                  sampler=TYPICAL_UNIFORM if typical else MIXED_EDGE,
                  ics_per_epoch=32 if typical else 128)
        kw["weights"] = LossWeights(
            lambda_phys=lam.lambda_phys if method in ("PINN", "MPI") else 0.0,
            lambda_cont=lam.lambda_cont if method in ("MIC", "MPI") else 0.0,
            lambda_reg=lam.lambda_reg,
        )
        if method == "Structured":
            kw.update(lr_max=5e-3, lr_min=5e-3)
        if scale == "desk":
            kw["epochs"] = 600
            kw["ics_per_epoch"] = 32 if typical else 64
        elif scale != "full":
            raise ConfigError(f"unknown scale {scale!r}")
        kw.update(overrides)
        return cls(**kw)

    @property
    def net_spec(self):
        return vfnet.NetSpec(2, self.hidden, wrapper=self.wrapper, wrapper_bound=self.wrapper_bound)

    @property
    def sampler_spec(self):
        return ICSamplerSpec(self.sampler)

    def with_(self, **changes):
        return replace(self, **changes)


# objective over one batch ---------------------------------------------------------

@dataclass
class Frozen:
    """Quantities held fixed when re-evaluating a batch objective (finite-difference oracle)."""

    kept: list
    seg_ics: dict
    steps: dict
    collocation: np.ndarray


@dataclass
class BatchResult:
    loss: LossBreakdown
    grad: np.ndarray
    dropped: int
    saturated: int
    frozen: Frozen


def batch_objective(field: vfnet.MLPField, times, truths, K, weights: LossWeights,
                    true_params=None, cfg: SolverConfig = TRAIN_SOLVER, frozen: Frozen = None,
                    detach=True):
    """Objective and gradient for truth trajectories ``truths`` of shape ``(n, len(times), d)``.

    ``detach=False`` lets gradients flow through segment initial conditions; it
    exists only to compare against the detached objective. A field that is not
    an ``MLPField`` (an analytic test double) gets the loss value only and
    ``grad`` is None.
    """
    true_params = true_params or systems.lotka_volterra()
    times = np.asarray(times, dtype=float)
    bounds = segment_bounds(times, K)
    record = isinstance(field, vfnet.MLPField)
    theta = field.theta if record else np.zeros(0)
    grad_traj = np.zeros_like(theta)
    data_sum = cont_sum = 0.0
    kept, seg_ics, steps, colloc = [], {}, {}, []
    dropped = saturated = 0
    for i, truth in enumerate(truths):
        if frozen is not None and i not in frozen.kept:
            continue
        segs = []
        try:
            ic = truth[0]
            for k, (a, b) in enumerate(bounds):
                if k > 0:
                    ic = frozen.seg_ics[i][k] if frozen else segs[-1][0].states[-1].copy()
                replay = frozen.steps[i][k] if frozen else None
                if record:
                    segs.append(integrate_recording(field, ic, times[a:b + 1], cfg, steps=replay))
                else:
                    segs.append((integrate(field, ic, times[a:b + 1], cfg, steps=replay), None))
        except SolverError:
            dropped += 1
            continue
        kept.append(i)
        seg_ics[i] = [s[0].states[0] for s in segs]
        steps[i] = [s[0].steps for s in segs]
        adjoints = []
        for k, (traj, _) in enumerate(segs):
            a, b = bounds[k]
            target = truth[a:b + 1]
            data_sum += data_loss(traj.states, target) / K
            adj = data_loss_grad(traj.states, target) / K
            if k < K - 1:
                diff = traj.states[-1] - truth[bounds[k + 1][0]]
                cont_sum += float(diff @ diff) / (K - 1)
                adj[-1] += weights.lambda_cont * 2.0 * diff / (K - 1)
            adjoints.append(adj)
            saturated += traj.meta["saturated"]
            colloc.append(traj.states)
            colloc.append(target)
        carry = None
        for k in range(K - 1, -1, -1) if record else ():
            adj = adjoints[k]
            if carry is not None:
                adj = adj.copy()
                adj[-1] += carry
            g, g_ic = segs[k][1].backward(adj)
            grad_traj += g
            carry = None if detach else g_ic
    n_ok = len(kept)
    if n_ok == 0:
        raise TrainingCollapse(f"all {len(truths)} initial conditions failed to integrate")
    collocation = frozen.collocation if frozen is not None else np.vstack(colloc)
    if not record:
        phys, grad_phys, sat_phys = physics_loss(field, collocation, true_params), 0.0, 0
    elif weights.lambda_phys > 0:
        phys, grad_phys, sat_phys = physics_loss_and_grad(field, collocation, true_params)
    else:
        # value kept for the history; no backward pass needed
        raw = vfnet.forward_raw(field.spec, theta, collocation)
        resid = vfnet.apply_wrapper(raw, field.spec.wrapper, field.spec.wrapper_bound)
        resid = resid - systems.rhs(true_params, collocation)
        phys = float(np.sum(resid * resid) / len(collocation))
        grad_phys, sat_phys = 0.0, vfnet.count_saturated(raw, field.spec.wrapper_bound)
    loss = total_loss(data_sum / n_ok, phys, cont_sum / n_ok, theta, weights)
    grad = None
    if record:
        grad = (grad_traj / n_ok + weights.lambda_phys * grad_phys
                + weights.lambda_reg * vfnet.param_l1_grad(theta))
    return BatchResult(loss, grad, dropped, saturated + sat_phys,
                       Frozen(kept, seg_ics, steps, collocation))


# training state ---------------------------------------------------------------------

@dataclass
class TrainingState:
    config: TrainConfig
    theta: np.ndarray
    opt: OptimizerState
    val_times: np.ndarray
    val_truths: np.ndarray
    ic_rng: np.random.Generator
    window_rng: np.random.Generator
    true_params: systems.SystemParams
    best_theta: np.ndarray = None
    best_val: float = math.inf
    best_epoch: int = -1
    history: list = dc_field(default_factory=list)
    saturated: int = 0

    @property
    def spec(self):
        return self.config.net_spec


def truth_states(true_params, ics, times, cfg: SolverConfig):
    """Ground truth for each IC on ``times`` (starting at 0); rows are None on failure."""
    field = systems.SystemField(true_params)
    out = []
    for ic in ics:
        try:
            out.append(integrate(field, ic, times, cfg).states)
        except SolverError:
            out.append(None)
    return out


def init_state(config: TrainConfig, true_params=None, theta=None) -> TrainingState:
    true_params = true_params or systems.lotka_volterra()
    spec = config.net_spec
    if theta is None:
        theta = vfnet.init_xavier(spec, config.seed)
    theta = np.array(theta, dtype=float)
    val_rng = np.random.default_rng([config.seed, STREAM_VALIDATION])
    val_times = uniform_grid(0.0, config.t_train, config.train_grid_dt)
    val_truths = []
    while len(val_truths) < config.n_val:
        ic = sample_ics(config.sampler_spec, config.n_val, val_rng)
        for row in truth_states(true_params, ic, val_times, config.solver_train):
            if row is not None and len(val_truths) < config.n_val:
                val_truths.append(row)
    return TrainingState(
        config=config, theta=theta, opt=OptimizerState.zeros(theta.size),
        val_times=val_times, val_truths=np.array(val_truths),
        ic_rng=np.random.default_rng([config.seed, STREAM_ICS]),
        window_rng=np.random.default_rng([config.seed, STREAM_WINDOWS]),
        true_params=true_params,
    )


def validation_mse(state: TrainingState, theta=None):
    field = vfnet.MLPField(state.spec, state.theta if theta is None else theta)
    errs = []
    for truth in state.val_truths:
        pred, _, sat = rollout(field, truth[0], state.val_times, state.config.solver_train)
        state.saturated += sat
        errs.append(float(np.mean(squared_errors(pred, truth))))
    return float(np.mean(errs))


def epoch_batch(state: TrainingState, epoch):
    """Window grid and truth trajectories for this epoch's freshly sampled ICs."""
    cfg = state.config
    t0, t1 = window_schedule(cfg.sampling, epoch, cfg.epochs, cfg.t_train, state.window_rng,
                             dt=cfg.train_grid_dt)
    ics = sample_ics(cfg.sampler_spec, cfg.ics_per_epoch, state.ic_rng)
    full = uniform_grid(0.0, t1, cfg.train_grid_dt)
    start = int(np.argmin(np.abs(full - t0)))
    truths, missing = [], 0
    for row in truth_states(state.true_params, ics, full, cfg.solver_train):
        if row is None:
            missing += 1
        else:
            truths.append(row[start:])
    return full[start:], np.array(truths), missing


def train_epoch(state: TrainingState, epoch) -> LossBreakdown:
    cfg = state.config
    times, truths, missing = epoch_batch(state, epoch)
    if len(truths) == 0:
        raise TrainingCollapse("no ground-truth trajectory could be generated", epoch)
    field = vfnet.MLPField(state.spec, state.theta)
    try:
        res = batch_objective(field, times, truths, cfg.K, cfg.weights, state.true_params,
                              cfg.solver_train)
    except TrainingCollapse as err:
        raise TrainingCollapse(str(err), epoch) from None
    if not (np.all(np.isfinite(res.grad)) and math.isfinite(res.loss.total)):
        raise TrainingCollapse("non-finite loss or gradient", epoch)
    lr = cosine_lr(epoch, cfg.epochs, cfg.lr_max, cfg.lr_min)
    g = clip_gradient(res.grad, cfg.grad_clip)
    state.theta = adam_step(state.opt, state.theta, g, lr)
    state.saturated += res.saturated
    val = validation_mse(state)
    if val < state.best_val:
        state.best_val, state.best_epoch, state.best_theta = val, epoch, state.theta.copy()
    loss = res.loss
    state.history.append({
        "epoch": epoch, "lr": lr, "loss_total": loss.total, "loss_data": loss.data,
        "loss_phys": loss.phys, "loss_cont": loss.cont, "loss_reg": loss.reg,
        "val_mse": val, "dropped_ics": res.dropped + missing,
    })
    return loss


@dataclass
class TrainResult:
    theta: np.ndarray
    history: list
    best_val: float
    best_epoch: int
    final_theta: np.ndarray
    saturated: int
    spec: vfnet.NetSpec


def train(config: TrainConfig, true_params=None, theta=None, progress=None) -> TrainResult:
    """Run every epoch in order; returns the best-validation checkpoint and the history."""
    if config.method == "Structured":
        raise ConfigError("the structured oracle is fitted with fit_structured, not train")
    state = init_state(config, true_params, theta)
    for epoch in range(config.epochs):
        train_epoch(state, epoch)
        if progress is not None:
            progress(state.history[-1])
    if state.best_theta is None:
        state.best_theta = state.theta.copy()
    return TrainResult(state.best_theta, state.history, state.best_val, state.best_epoch,
                       state.theta, state.saturated, state.spec)


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in history:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in HISTORY_COLUMNS[1:-1]]
                            + [row["dropped_ics"]])


def read_history(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: (int(v) if k in ("epoch", "dropped_ics") else float(v)) for k, v in r.items()}
            for r in rows]


def save_best(path, result: TrainResult, seed):
    vfnet.save_checkpoint(path, result.spec, result.theta, seed=seed,
                          epoch=result.best_epoch, val_mse=result.best_val)
    return Path(path)
