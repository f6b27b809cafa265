"""Adam with bias correction, cosine learning-rate annealing and norm clipping."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


def cosine_lr(epoch, total_epochs, lr_max=3e-3, lr_min=3e-4):
    if total_epochs < 1 or not 0 <= epoch <= total_epochs:
        raise ContractError("need 0 <= epoch <= total_epochs and total_epochs >= 1")
    if lr_min > lr_max:
        raise ContractError("lr_min must not exceed lr_max")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * epoch / total_epochs))


def clip_gradient(g, max_norm):
    """Rescale ``g`` onto the l2 ball of radius ``max_norm`` if it lies outside."""
    if max_norm <= 0:
        raise ContractError("max_norm must be positive")
    g = np.asarray(g, dtype=float)
    norm = float(np.linalg.norm(g))
    if norm <= max_norm:
        return g
    return g * (max_norm / norm)


@dataclass
class OptimizerState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    @classmethod
    def zeros(cls, n, **kw):
        return cls(np.zeros(n), np.zeros(n), **kw)

    def __post_init__(self):
        if self.first_moment.shape != self.second_moment.shape:
            raise ContractError("moment vectors must be aligned")
        if self.step_count < 0:
            raise ContractError("step_count must be non-negative")


def adam_step(opt: OptimizerState, params, g, lr):
    """One Adam update; mutates ``opt`` and returns the new parameter vector."""
    params = np.asarray(params, dtype=float)
    g = np.asarray(g, dtype=float)
    if params.shape != g.shape or g.shape != opt.first_moment.shape:
        raise ContractError("parameters, gradient and moments must have equal length")
    opt.step_count += 1
    opt.first_moment = opt.beta1 * opt.first_moment + (1.0 - opt.beta1) * g
    opt.second_moment = opt.beta2 * opt.second_moment + (1.0 - opt.beta2) * g * g
    m_hat = opt.first_moment / (1.0 - opt.beta1 ** opt.step_count)
    v_hat = opt.second_moment / (1.0 - opt.beta2 ** opt.step_count)
    return params - lr * m_hat / (np.sqrt(v_hat) + opt.eps_adam)
