"""Initial-condition samplers for the typical and edge regimes."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError

TYPICAL_UNIFORM = "TypicalUniform"
MIXED_EDGE = "MixedEdge"
SAMPLER_MODES = (TYPICAL_UNIFORM, MIXED_EDGE)


@dataclass(frozen=True)
class ICSamplerSpec:
    mode: str = MIXED_EDGE
    uniform_lo: float = 0.1
    uniform_hi: float = 10.0
    loguniform_lo: float = 1e-3
    loguniform_hi: float = 10.0
    dim: int = 2

    def __post_init__(self):
        if self.mode not in SAMPLER_MODES:
            raise ContractError(f"unknown sampler mode {self.mode!r}")
        if not 0 < self.uniform_lo < self.uniform_hi:
            raise ContractError("need 0 < uniform_lo < uniform_hi")
        if not 0 < self.loguniform_lo < self.loguniform_hi:
            raise ContractError("need 0 < loguniform_lo < loguniform_hi")


def sample_ics(spec: ICSamplerSpec, n: int, rng) -> np.ndarray:
    """``(n, dim)`` strictly positive initial states.

    MixedEdge puts the first ceil(n/2) rows in the uniform box and the rest on
    the log-uniform box; TypicalUniform draws every row from the uniform box.
    """
    if n < 1:
        raise ContractError("need at least one initial condition")
    n_uniform = n if spec.mode == TYPICAL_UNIFORM else math.ceil(n / 2)
    uniform = rng.uniform(spec.uniform_lo, spec.uniform_hi, size=(n_uniform, spec.dim))
    lo, hi = np.log10(spec.loguniform_lo), np.log10(spec.loguniform_hi)
    edge = 10.0 ** rng.uniform(lo, hi, size=(n - n_uniform, spec.dim))
    return np.vstack([uniform, edge])


def regime_tags(spec: ICSamplerSpec, n: int):
    """Regime label per row of ``sample_ics(spec, n, ...)``."""
    n_uniform = n if spec.mode == TYPICAL_UNIFORM else math.ceil(n / 2)
    return ["typical"] * n_uniform + ["edge"] * (n - n_uniform)
