"""Loss terms of the training objective and their assembly.

Every term comes with the partials the trainer needs: ``*_grad`` functions
return derivatives with respect to predicted states (which then flow through
the solver tape) or directly with respect to the parameter vector.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import systems, vfnet
from .errors import ContractError


@dataclass(frozen=True)
class LossWeights:
    lambda_phys: float = 10.0
    lambda_cont: float = 1.0
    lambda_reg: float = 1e-5

    def __post_init__(self):
        if min(self.lambda_phys, self.lambda_cont, self.lambda_reg) < 0:
            raise ContractError("loss weights must be non-negative")


@dataclass(frozen=True)
class LossBreakdown:
    data: float
    phys: float
    cont: float
    reg: float
    total: float

    def as_dict(self):
        return asdict(self)


def _states(x):
    return np.asarray(getattr(x, "states", x), dtype=float)


def _check_pair(pred, truth):
    times_p = getattr(pred, "times", None)
    times_t = getattr(truth, "times", None)
    if times_p is not None and times_t is not None and not np.array_equal(times_p, times_t):
        raise ContractError("prediction and truth live on different time grids")
    p, t = _states(pred), _states(truth)
    if p.shape != t.shape:
        raise ContractError(f"shape mismatch {p.shape} vs {t.shape}")
    return p, t


def data_loss(pred, truth) -> float:
    """Mean over time points of the squared Euclidean error."""
    p, t = _check_pair(pred, truth)
    diff = p - t
    return float(np.sum(diff * diff) / p.shape[0])


def data_loss_grad(pred, truth):
    p, t = _check_pair(pred, truth)
    return 2.0 * (p - t) / p.shape[0]


def physics_residual(field: vfnet.MLPField, states, true_params: systems.SystemParams):
    z = np.atleast_2d(np.asarray(states, dtype=float))
    return field(z) - systems.rhs(true_params, z)


def physics_loss(field: vfnet.MLPField, collocation, true_params: systems.SystemParams) -> float:
    """Mean of ``|f_theta(z) - f_true(z)|^2`` over the collocation states."""
    z = np.atleast_2d(np.asarray(collocation, dtype=float))
    if z.shape[0] == 0:
        raise ContractError("empty collocation set")
    r = physics_residual(field, z, true_params)
    return float(np.sum(r * r) / z.shape[0])


def physics_loss_and_grad(field: vfnet.MLPField, collocation, true_params):
    """``(value, dvalue/dtheta, n_saturated)``; collocation states are constants."""
    z = np.atleast_2d(np.asarray(collocation, dtype=float))
    if z.shape[0] == 0:
        raise ContractError("empty collocation set")
    target = systems.rhs(true_params, z)
    cache = vfnet._forward_cache(field.spec, field.theta, z)
    raw = cache[2]
    r = vfnet.apply_wrapper(raw, field.spec.wrapper, field.spec.wrapper_bound) - target
    value = float(np.sum(r * r) / z.shape[0])
    grad = vfnet.backward_from_cache(field.spec, cache, 2.0 * r / z.shape[0])
    return value, grad, vfnet.count_saturated(raw, field.spec.wrapper_bound)


def continuity_loss(segment_end_preds, segment_start_truths) -> float:
    """Mean squared junction mismatch; zero when there are no junctions."""
    ends = np.asarray(segment_end_preds, dtype=float)
    starts = np.asarray(segment_start_truths, dtype=float)
    if ends.shape != starts.shape:
        raise ContractError("junction lists must align")
    if ends.size == 0:
        return 0.0
    diff = ends - starts
    return float(np.sum(diff * diff) / ends.shape[0])


def continuity_loss_grad(segment_end_preds, segment_start_truths):
    ends = np.asarray(segment_end_preds, dtype=float)
    starts = np.asarray(segment_start_truths, dtype=float)
    if ends.size == 0:
        return np.zeros_like(ends)
    return 2.0 * (ends - starts) / ends.shape[0]


def total_loss(data: float, phys: float, cont: float, theta, weights: LossWeights) -> LossBreakdown:
    reg = vfnet.param_l1(theta)
    total = (data + weights.lambda_phys * phys + weights.lambda_cont * cont
             + weights.lambda_reg * reg)
    return LossBreakdown(float(data), float(phys), float(cont), reg, float(total))
