"""Adaptive Dormand-Prince integration with a discretize-then-optimize gradient tape.

The compiled kernel (``_ccore``) is used when it imports; otherwise the NumPy
reference (``_pycore``) takes over. ``MPINODE_BACKEND=python`` forces the
fallback.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from ..errors import (
    BlowUpError,
    ContractError,
    DivergenceError,
    StiffnessError,
    TapeExhaustedError,
)
from ..systems import LOTKA_VOLTERRA, SystemField
from ..vfnet import WRAPPER_CODES, MLPField
from . import _pycore

try:
    if os.environ.get("MPINODE_BACKEND", "").lower() == "python":
        raise ImportError("fallback forced by MPINODE_BACKEND")
    from . import _ccore
except ImportError:
    _ccore = None

BACKEND = "compiled" if _ccore is not None else "python"
_core = _ccore if _ccore is not None else _pycore


def get_core(name=None):
    """Kernel module by name: "compiled", "python" or None for the active backend."""
    if name is None:
        return _core
    if name == "python":
        return _pycore
    if name == "compiled":
        if _ccore is None:
            raise ImportError("compiled solver kernel is not available")
        return _ccore
    raise ValueError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-5
    atol: float = 1e-6
    initial_step: float = 1e-2
    max_steps: int = 100_000
    min_step: float = 1e-12

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ContractError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ContractError("max_steps must be at least 1")
        if not 0 < self.min_step < self.initial_step:
            raise ContractError("need 0 < min_step < initial_step")


TRAIN_SOLVER = SolverConfig(rtol=1e-5, atol=1e-6)
EVAL_SOLVER = SolverConfig(rtol=1e-8, atol=1e-8)


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.times.shape[0]:
            raise ContractError("one state per time point required")
        if np.any(np.diff(self.times) <= 0):
            raise ContractError("times must be strictly increasing")

    @property
    def steps(self):
        """Accepted step sequence ``(start_times, sizes)`` for replay."""
        return self.meta["steps_t"], self.meta["steps_h"]


def _kernel_for(field, dim, core):
    if isinstance(field, MLPField):
        layers = field.layers()
        return core.MLPKernel([W for W, _ in layers], [b for _, b in layers],
                              WRAPPER_CODES[field.spec.wrapper], field.spec.wrapper_bound)
    if isinstance(field, SystemField) and field.params.system == LOTKA_VOLTERRA:
        return core.LVKernel(field.params.values)
    if callable(field):
        return core.PyFieldKernel(field, dim)
    raise ContractError(f"{field!r} is not a vector field")


def _check_inputs(field, ic, grid):
    ic = np.array(ic, dtype=float).reshape(-1)
    grid = np.asarray(grid, dtype=float).reshape(-1)
    if grid.size < 1:
        raise ContractError("empty output grid")
    if np.any(np.diff(grid) <= 0):
        raise ContractError("output grid must be strictly increasing")
    if not np.all(np.isfinite(ic)):
        raise ContractError("initial condition must be finite")
    dim = getattr(field, "dim", ic.size)
    if dim != ic.size:
        raise ContractError(f"field dimension {dim} does not match initial condition {ic.size}")
    return ic, grid


_ERRORS = {1: DivergenceError, 2: StiffnessError, 3: BlowUpError}
_MESSAGES = {1: "step budget exhausted", 2: "step size underflow", 3: "non-finite state"}


def _run(field, ic, grid, cfg, record, steps, core):
    ic, grid = _check_inputs(field, ic, grid)
    cfg = cfg or TRAIN_SOLVER
    core = get_core(core)
    kernel = _kernel_for(field, ic.size, core)
    replay_t = replay_h = None
    if steps is not None:
        replay_t, replay_h = (np.asarray(s, dtype=float) for s in steps)
    Y, n_acc, n_rej, status, t_fail, tape, steps_t, steps_h = core.solve(
        kernel, ic, grid, cfg.rtol, cfg.atol, cfg.initial_step, cfg.max_steps, cfg.min_step,
        record, replay_t, replay_h,
    )
    if status:
        n_ok = int(np.searchsorted(grid, t_fail, side="right"))
        raise _ERRORS[status](_MESSAGES[status], t_fail, Y[:n_ok].copy())
    meta = {"accepted": int(n_acc), "rejected": int(n_rej), "steps_t": steps_t,
            "steps_h": steps_h, "saturated": int(kernel.n_saturated)}
    return Trajectory(grid.copy(), Y, meta), tape


def integrate(field, ic, grid, cfg: SolverConfig | None = None, steps=None, backend=None):
    """States of ``dz/dt = field(z)`` from ``ic`` at every time in ``grid``.

    ``grid[0]`` is the initial time. ``steps`` replays a recorded accepted-step
    sequence instead of adapting.
    """
    traj, _ = _run(field, ic, grid, cfg, False, steps, backend)
    return traj


class GradientTape:
    """Vector-Jacobian products of a recorded MLP integration, usable once."""

    def __init__(self, raw_tape, n_params):
        self._tape = raw_tape
        self.n_params = n_params

    @property
    def consumed(self):
        return self._tape is None or bool(self._tape.consumed)

    def backward(self, state_adjoint):
        """Returns ``(dL/dtheta, dL/dic)`` for outputs with partials ``state_adjoint``."""
        if self.consumed:
            raise TapeExhaustedError("gradient already evaluated on this tape")
        adj = np.asarray(state_adjoint, dtype=float)
        grad, grad_ic = self._tape.backward(adj)
        self._tape = None
        # the first grid state is the initial condition itself
        return grad, grad_ic + adj[0]


def integrate_recording(field: MLPField, ic, grid, cfg: SolverConfig | None = None,
                        steps=None, backend=None):
    """Like ``integrate`` but also returns a ``GradientTape`` over the accepted steps."""
    if not isinstance(field, MLPField):
        raise ContractError("recording integration needs an MLPField")
    traj, tape = _run(field, ic, grid, cfg, True, steps, backend)
    return traj, GradientTape(tape, field.spec.n_params)


def finite_difference_check(field: MLPField, ic, grid, cfg, loss, eps=1e-5, n_coords=20,
                            seed=0, gradient=None, backend=None):
    """Max relative error between backpropagated and central-difference gradients.

    ``loss(states) -> (value, dvalue/dstates)``. Perturbed integrations replay the
    accepted steps of the unperturbed run. ``gradient`` substitutes the gradient
    under test (used to check that the check itself catches errors).
    """
    if eps <= 0:
        raise ContractError("eps must be positive")
    n = field.spec.n_params
    if not 1 <= n_coords <= n:
        raise ContractError("n_coords must be between 1 and the parameter count")
    traj, tape = integrate_recording(field, ic, grid, cfg, backend=backend)
    _, dstates = loss(traj.states)
    g, _ = tape.backward(dstates)
    if gradient is not None:
        g = np.asarray(gradient, dtype=float)
    coords = np.random.default_rng(seed).choice(n, size=n_coords, replace=False)
    worst = 0.0
    for c in coords:
        vals = []
        for sign in (1.0, -1.0):
            theta = field.theta.copy()
            theta[c] += sign * eps
            pert = integrate(MLPField(field.spec, theta), ic, grid, cfg,
                             steps=traj.steps, backend=backend)
            vals.append(loss(pert.states)[0])
        fd = (vals[0] - vals[1]) / (2.0 * eps)
        worst = max(worst, abs(g[c] - fd) / max(abs(fd), 1e-12))
    return worst


__all__ = [
    "BACKEND", "SolverConfig", "TRAIN_SOLVER", "EVAL_SOLVER", "Trajectory", "GradientTape",
    "integrate", "integrate_recording", "finite_difference_check", "get_core",
]
