"""Collocation fit of the four Lotka-Volterra coefficients (the structured oracle)."""
from __future__ import annotations

import numpy as np

from .. import systems
from ..errors import ContractError
from .optim import OptimizerState, adam_step, cosine_lr


def collocation_loss_and_grad(values, states, targets):
    """Mean ``|f_p(z) - target|^2`` and its gradient in ``(alpha, beta, gamma, delta)``."""
    alpha, beta, gamma, delta = values
    x, y = states[:, 0], states[:, 1]
    xy = x * y
    r1 = alpha * x - beta * xy - targets[:, 0]
    r2 = delta * xy - gamma * y - targets[:, 1]
    n = len(states)
    loss = float(np.sum(r1 * r1 + r2 * r2) / n)
    grad = 2.0 / n * np.array([r1 @ x, -(r1 @ xy), -(r2 @ y), r2 @ xy])
    return loss, grad


def fit_structured(states, init_params=(1.0, 1.0, 1.0, 1.0), lr=5e-3, epochs=3000,
                   true_params=None, lr_min=None):
    """Adam fit of the LV coefficients to ``f_true`` on ground-truth states.

    ``lr_min`` switches from a constant rate to cosine annealing down to it.
    Returns ``(SystemParams, loss_history)``.
    """
    true_params = true_params or systems.lotka_volterra()
    z = np.asarray(states, dtype=float).reshape(-1, 2)
    if len(z) == 0:
        raise ContractError("no states to fit")
    if epochs < 1:
        raise ContractError("epochs must be at least 1")
    targets = systems.rhs(true_params, z)
    values = np.array(getattr(init_params, "values", init_params), dtype=float)
    opt = OptimizerState.zeros(4)
    history = []
    for epoch in range(epochs):
        loss, grad = collocation_loss_and_grad(values, z, targets)
        history.append(loss)
        step = lr if lr_min is None else cosine_lr(epoch, epochs, lr, lr_min)
        values = adam_step(opt, values, grad, step)
    history.append(collocation_loss_and_grad(values, z, targets)[0])
    return systems.SystemParams(systems.LOTKA_VOLTERRA, tuple(values)), np.array(history)


def relative_errors(fitted: systems.SystemParams, truth: systems.SystemParams):
    return {name: abs(f - t) / abs(t)
            for name, f, t in zip(truth.names, fitted.values, truth.values)}
