"""Training windows over time and their split into shooting segments."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError, ContractError

FULL_WINDOW = "FullWindow"
EXPANDING = "Expanding"
SLIDING = "Sliding"
STRATEGIES = (FULL_WINDOW, EXPANDING, SLIDING)

SLIDING_LENGTH = 6.0
EXPANDING_FRACTION = 0.75
EXPANDING_START = 0.1  # fraction of t_train


def window_schedule(strategy, epoch, total_epochs, t_train, rng=None, dt=None):
    """``(t_start, t_end)`` of the active training window at ``epoch``.

    With ``dt`` given, window edges are snapped to multiples of ``dt`` so that
    truth states exist at every training time.
    """
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown sampling strategy {strategy!r}")
    if not 0 <= epoch < total_epochs:
        raise ContractError("need 0 <= epoch < total_epochs")
    snap = (lambda t: float(np.round(t / dt) * dt)) if dt else float
    if strategy == FULL_WINDOW:
        return 0.0, float(t_train)
    if strategy == EXPANDING:
        ramp = EXPANDING_FRACTION * total_epochs
        w0 = EXPANDING_START * t_train
        if epoch >= ramp:
            return 0.0, float(t_train)
        return 0.0, snap(w0 + (t_train - w0) * epoch / ramp)
    if t_train < SLIDING_LENGTH:
        raise ConfigError(f"sliding windows need t_train >= {SLIDING_LENGTH}, got {t_train}")
    if rng is None:
        raise ContractError("sliding windows need a random generator")
    offset = snap(rng.uniform(0.0, t_train - SLIDING_LENGTH))
    return offset, offset + SLIDING_LENGTH


def uniform_grid(t_start, t_end, dt):
    """Uniform grid including both ends; ``t_end - t_start`` must be a multiple of ``dt``."""
    n = int(round((t_end - t_start) / dt))
    if n < 1:
        raise ContractError("window shorter than one grid step")
    return np.round(t_start + dt * np.arange(n + 1), 12)


def split_segments(grid, K):
    """K contiguous sub-grids sharing boundary points, cut nearest to equal time splits."""
    grid = np.asarray(grid, dtype=float)
    if K < 1:
        raise ConfigError("K must be at least 1")
    if grid.size < K + 1:
        raise ConfigError(f"a grid of {grid.size} points cannot hold {K} segments")
    targets = np.linspace(grid[0], grid[-1], K + 1)
    cuts = [0]
    for k in range(1, K):
        idx = int(np.argmin(np.abs(grid - targets[k])))
        # keep every segment at least one step long
        idx = min(max(idx, cuts[-1] + 1), grid.size - 1 - (K - k))
        cuts.append(idx)
    cuts.append(grid.size - 1)
    return [grid[a:b + 1] for a, b in zip(cuts[:-1], cuts[1:])]


def segment_bounds(grid, K):
    """Index ranges ``(start, stop_inclusive)`` of ``split_segments(grid, K)``."""
    segments = split_segments(grid, K)
    bounds, start = [], 0
    for seg in segments:
        bounds.append((start, start + seg.size - 1))
        start += seg.size - 1
    return bounds
