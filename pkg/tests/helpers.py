"""Path and lift construction shared across test modules."""

from __future__ import annotations

import time

import numpy as np

from roughwz import SamplePath, TimeGrid, lift_piecewise_linear


def random_path(rng, n_segments: int, dim: int, scale: float = 0.5,
                uniform: bool = True) -> SamplePath:
    """Random walk path on a uniform (or random) partition of [0, 1]."""
    if uniform:
        grid = TimeGrid.uniform(n_segments)
    else:
        cuts = np.sort(rng.uniform(0.02, 0.98, size=n_segments - 1))
        while np.min(np.diff(np.concatenate([[0.0], cuts, [1.0]]))) < 1e-3:
            cuts = np.sort(rng.uniform(0.02, 0.98, size=n_segments - 1))
        grid = TimeGrid(np.concatenate([[0.0], cuts, [1.0]]))
    inc = scale * rng.normal(size=(n_segments, dim))
    return SamplePath(grid, np.vstack([np.zeros(dim), np.cumsum(inc, axis=0)]))


def random_lift(rng, n_segments: int, dim: int, level: int = 3,
                scale: float = 0.5, uniform: bool = True):
    return lift_piecewise_linear(
        random_path(rng, n_segments, dim, scale, uniform), level)


def ramp_path(m: int, dim: int = 1, slopes=None, hurst=None) -> SamplePath:
    """Deterministic path w_t = slopes * t on the uniform m-grid."""
    grid = TimeGrid.uniform(m)
    s = np.ones(dim) if slopes is None else np.asarray(slopes, dtype=float)
    return SamplePath(grid, grid.times[:, None] * s[None, :], hurst=hurst)


class stopwatch:
    """Wall-clock context manager for runtime-budget assertions."""

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start
        return False
