"""Analytic benchmark systems: Lotka-Volterra, Lorenz-63 and FitzHugh-Nagumo.

All right-hand sides accept a single state of shape ``(d,)`` or a stack of
states of shape ``(n, d)`` and return an array of the same shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError

LOTKA_VOLTERRA = "LotkaVolterra"
LORENZ63 = "Lorenz63"
FITZHUGH_NAGUMO = "FitzHughNagumo"

COEFFICIENT_NAMES = {
    LOTKA_VOLTERRA: ("alpha", "beta", "gamma", "delta"),
    LORENZ63: ("sigma", "rho", "beta"),
    FITZHUGH_NAGUMO: ("a", "b", "tau", "I"),
}
DIMENSION = {LOTKA_VOLTERRA: 2, LORENZ63: 3, FITZHUGH_NAGUMO: 2}

# Documented only; horizons elsewhere are absolute times.
LV_PERIOD = 5.13


@dataclass(frozen=True)
class SystemParams:
    system: str
    values: tuple

    def __post_init__(self):
        if self.system not in COEFFICIENT_NAMES:
            raise ContractError(f"unknown system {self.system!r}")
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        names = COEFFICIENT_NAMES[self.system]
        if len(values) != len(names):
            raise ContractError(
                f"{self.system} takes {len(names)} coefficients, got {len(values)}"
            )
        if not all(np.isfinite(values)):
            raise ContractError("coefficients must be finite")
        if self.system == LOTKA_VOLTERRA and min(values) <= 0.0:
            raise ContractError("Lotka-Volterra coefficients must be strictly positive")

    @property
    def names(self):
        return COEFFICIENT_NAMES[self.system]

    @property
    def dim(self):
        return DIMENSION[self.system]

    def as_dict(self):
        return dict(zip(self.names, self.values))

    def __getitem__(self, name):
        return self.values[self.names.index(name)]

    @classmethod
    def from_dict(cls, system, mapping):
        names = COEFFICIENT_NAMES.get(system)
        if names is None:
            raise ContractError(f"unknown system {system!r}")
        missing = [n for n in names if n not in mapping]
        if missing:
            raise ContractError(f"missing coefficients for {system}: {missing}")
        return cls(system, tuple(float(mapping[n]) for n in names))


def lotka_volterra(alpha=1.5, beta=1.0, gamma=3.0, delta=1.0):
    return SystemParams(LOTKA_VOLTERRA, (alpha, beta, gamma, delta))


def lorenz63(sigma=10.0, rho=28.0, beta=8.0 / 3.0):
    return SystemParams(LORENZ63, (sigma, rho, beta))


def fitzhugh_nagumo(a=0.7, b=0.8, tau=12.5, I=0.5):
    return SystemParams(FITZHUGH_NAGUMO, (a, b, tau, I))


def _as_states(params, state):
    z = np.asarray(state, dtype=float)
    if z.shape[-1:] != (params.dim,) or z.ndim > 2:
        raise ContractError(
            f"{params.system} expects states of dimension {params.dim}, got shape {z.shape}"
        )
    return z


def rhs(params: SystemParams, state) -> np.ndarray:
    """Instantaneous derivative of ``state`` (or of each row of a state stack)."""
    z = _as_states(params, state)
    out = np.empty_like(z)
    if params.system == LOTKA_VOLTERRA:
        alpha, beta, gamma, delta = params.values
        x, y = z[..., 0], z[..., 1]
        out[..., 0] = alpha * x - beta * x * y
        out[..., 1] = delta * x * y - gamma * y
    elif params.system == LORENZ63:
        sigma, rho, beta = params.values
        x, y, w = z[..., 0], z[..., 1], z[..., 2]
        out[..., 0] = sigma * (y - x)
        out[..., 1] = x * (rho - w) - y
        out[..., 2] = x * y - beta * w
    else:
        a, b, tau, current = params.values
        v, w = z[..., 0], z[..., 1]
        out[..., 0] = v - v**3 / 3.0 - w + current
        out[..., 1] = (v + a - b * w) / tau
    return out


def hamiltonian(params: SystemParams, state):
    """Conserved quantity ``delta x - gamma ln x + beta y - alpha ln y`` of Lotka-Volterra.

    Raises DomainError if any state has a non-positive component.
    """
    if params.system != LOTKA_VOLTERRA:
        raise ContractError("hamiltonian is defined for Lotka-Volterra only")
    z = _as_states(params, state)
    if np.any(z <= 0.0):
        raise DomainError("hamiltonian needs strictly positive populations")
    alpha, beta, gamma, delta = params.values
    x, y = z[..., 0], z[..., 1]
    h = delta * x - gamma * np.log(x) + beta * y - alpha * np.log(y)
    return float(h) if np.ndim(h) == 0 else h


def equilibrium(params: SystemParams) -> np.ndarray:
    """Coexistence fixed point ``(gamma/delta, alpha/beta)``."""
    if params.system != LOTKA_VOLTERRA:
        raise ContractError("equilibrium is implemented for Lotka-Volterra only")
    alpha, beta, gamma, delta = params.values
    return np.array([gamma / delta, alpha / beta])


class SystemField:
    """Callable vector field ``z -> rhs(params, z)`` that the solver can dispatch on."""

    def __init__(self, params: SystemParams):
        self.params = params
        self.dim = params.dim

    def __call__(self, z):
        return rhs(self.params, z)

    def __repr__(self):
        return f"SystemField({self.params.system}, {self.params.values})"
