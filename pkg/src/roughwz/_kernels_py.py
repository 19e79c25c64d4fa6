"""Pure NumPy fallback for the dynamic-programming hot loops.

Semantics must match ``_kernels.pyx`` bit-for-bit on the same inputs:
the compiled module is preferred at import time and this one exists so
the package works (and stays testable) without a C toolchain.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"


def pvar_dp(costs: np.ndarray) -> float:
    """Best partition value for superadditive interval costs.

    ``costs[i, j]`` (i < j) is the reward of making [t_i, t_j] one
    partition block; returns max over node subsets containing both
    endpoints of the summed rewards.  O(n^2).
    """
    n = costs.shape[0]
    dp = np.zeros(n)
    for j in range(1, n):
        dp[j] = np.max(dp[:j] + costs[:j, j])
    return float(dp[-1])


def _interval_costs(r1, r2, r3, level, q_by_level):
    """Cost matrices |x^k_{i,j}|^{q_k} for all node pairs, per level."""
    n = r1.shape[0]
    x1 = r1[None, :, :] - r1[:, None, :]  # (i, j, a)
    out = [np.sum(x1 ** 2, axis=2) ** (q_by_level[0] / 2.0)]
    x2 = None
    if level >= 2:
        x2 = (r2[None, :, :, :] - r2[:, None, :, :]
              - r1[:, None, :, None] * x1[:, :, None, :])
        out.append(np.sum(x2 ** 2, axis=(2, 3)) ** (q_by_level[1] / 2.0))
    if level >= 3:
        x3 = (r3[None, :, :, :, :] - r3[:, None, :, :, :]
              - r2[:, None, :, :, None] * x1[:, :, None, None, :]
              - r1[:, None, :, None, None] * x2[:, :, None, :, :])
        out.append(np.sum(x3 ** 2, axis=(2, 3, 4)) ** (q_by_level[2] / 2.0))
    return out


def nfunc_scan(r1: np.ndarray, r2: np.ndarray, r3: np.ndarray, level: int,
               p: float, beta: float) -> tuple[int, list[int]]:
    """Greedy block scan of the p-variation control against ``beta``.

    Walks the grid left to right; a block closes at the first node where
    the accumulated control sum_k ||x^k||^{p/k}_{p/k-var} over the block
    reaches ``beta`` (>= at equality).  Returns the number of blocks that
    close strictly before t=1 and their node indices.
    """
    n = r1.shape[0]
    qs = [p / k for k in range(1, level + 1)]
    costs = _interval_costs(r1, r2, r3, level, qs)
    breaks: list[int] = []
    a = 0
    while a < n - 1:
        dp = [np.zeros(n - a) for _ in costs]
        hit = None
        for j in range(a + 1, n):
            omega = 0.0
            for k, c in enumerate(costs):
                dp[k][j - a] = np.max(dp[k][: j - a] + c[a:j, j])
                omega += dp[k][j - a]
            if omega >= beta:
                hit = j
                break
        if hit is None or hit == n - 1:
            if hit == n - 1:
                breaks.append(hit)  # tau = 1 exactly; recorded but not counted
            break
        breaks.append(hit)
        a = hit
    count = sum(1 for b in breaks if b < n - 1)
    return count, breaks
