"""Piecewise-linear rough-path lifts, Chen algebra, and p-variation.

A path's level-k lift over an interval is the k-fold iterated integral
x^k_{s,t} = \\int_{s<t_1<...<t_k<t} dx ⊗ ... ⊗ dx.  Over one linear
segment with increment Δ the closed form is Δ^{⊗k} / k!, and adjacent
intervals compose by Chen's identity

    x^k_{s,t} = sum_{i=0..k} x^{k-i}_{s,u} ⊗ x^i_{u,t}.

Everything here works with dense tensors up to level 3 and grid-node
partitions; the p-variation seminorms are exact suprema over node
subsets, computed by the dynamic-programming kernels in ``_backend``.
Tensor magnitudes use the Hilbert-Schmidt (Frobenius) norm throughout.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product
from math import floor

import numpy as np

from ._backend import kernels
from .errors import ConfigurationError, UnsupportedLevelError
from .fbm import SamplePath, TimeGrid, interpolate_to

__all__ = [
    "RoughPathLevels",
    "lift_piecewise_linear",
    "segment_tensors",
    "running_levels",
    "chen_compose",
    "interval_tensors",
    "levy_area_running",
    "pvar_seminorm",
    "intrinsic_control",
    "homogeneous_pvar_norm",
    "pvar_distance",
    "n_functional",
    "dilate",
    "chen_defect",
    "shuffle_defect",
    "level3_consistency_check",
    "lift_between",
    "lift_to_csv",
]

MAX_LEVEL = 3


def _check_level(level: int) -> int:
    level = int(level)
    if not 1 <= level <= MAX_LEVEL:
        raise UnsupportedLevelError(f"tensor levels must lie in 1..{MAX_LEVEL}, got {level}")
    return level


def _hs(x: np.ndarray, k: int) -> np.ndarray:
    """Hilbert-Schmidt norm over the trailing k tensor axes."""
    return np.sqrt(np.sum(x * x, axis=tuple(range(x.ndim - k, x.ndim))))


# ---------------------------------------------------------------------------
# lift construction and Chen algebra
# ---------------------------------------------------------------------------

def segment_tensors(increments: np.ndarray, level: int) -> tuple[np.ndarray, ...]:
    """Closed-form lift of each linear segment: Δ^{⊗k} / k!.

    ``increments`` may carry leading batch axes: (..., N, d).
    """
    level = _check_level(level)
    d1 = increments
    out = [d1]
    if level >= 2:
        out.append(np.einsum("...a,...b->...ab", d1, d1) / 2.0)
    if level >= 3:
        out.append(np.einsum("...a,...b,...c->...abc", d1, d1, d1) / 6.0)
    return tuple(out)


def running_levels(segments: tuple[np.ndarray, ...]) -> tuple[np.ndarray, ...]:
    """Running lift x_{t_0, t_j} at every node, from per-segment tensors.

    Chen's identity telescopes into cumulative sums:
        R1_j = sum Δ_l,
        R2_j = sum (R1_{l-1} ⊗ Δ_l + s2_l),
        R3_j = sum (R2_{l-1} ⊗ Δ_l + R1_{l-1} ⊗ s2_l + s3_l).
    Row 0 is zero.  Batch axes pass through.
    """
    s1 = segments[0]
    batch = s1.shape[:-2]
    n, d = s1.shape[-2], s1.shape[-1]

    def _pad(cum):
        out = np.zeros(batch + (n + 1,) + cum.shape[len(batch) + 1:])
        sl = (Ellipsis, slice(1, None)) + (slice(None),) * (cum.ndim - len(batch) - 1)
        out[sl] = cum
        return out

    r1 = _pad(np.cumsum(s1, axis=len(batch)))
    out = [r1]
    if len(segments) >= 2:
        t2 = np.einsum("...na,...nb->...nab", r1[..., :-1, :], s1) + segments[1]
        r2 = _pad(np.cumsum(t2, axis=len(batch)))
        out.append(r2)
    if len(segments) >= 3:
        t3 = (np.einsum("...nab,...nc->...nabc", r2[..., :-1, :, :], s1)
              + np.einsum("...na,...nbc->...nabc", r1[..., :-1, :], segments[1])
              + segments[2])
        out.append(_pad(np.cumsum(t3, axis=len(batch))))
    return tuple(out)


def chen_compose(x: tuple[np.ndarray, ...], y: tuple[np.ndarray, ...]) -> tuple[np.ndarray, ...]:
    """Chen composition of two adjacent interval lifts (levelwise tuples)."""
    if len(x) != len(y):
        raise ConfigurationError("cannot compose lifts of different levels")
    level = len(x)
    out = [x[0] + y[0]]
    if level >= 2:
        out.append(x[1] + y[1] + np.einsum("...a,...b->...ab", x[0], y[0]))
    if level >= 3:
        out.append(x[2] + y[2]
                   + np.einsum("...ab,...c->...abc", x[1], y[0])
                   + np.einsum("...a,...bc->...abc", x[0], y[1]))
    return tuple(out)


def interval_tensors(running: tuple[np.ndarray, ...], i: int, j: int) -> tuple[np.ndarray, ...]:
    """x_{t_i, t_j} recovered from running lifts (group inverse + Chen)."""
    r1 = running[0]
    x1 = r1[..., j, :] - r1[..., i, :]
    out = [x1]
    if len(running) >= 2:
        r2 = running[1]
        x2 = (r2[..., j, :, :] - r2[..., i, :, :]
              - np.einsum("...a,...b->...ab", r1[..., i, :], x1))
        out.append(x2)
    if len(running) >= 3:
        r3 = running[2]
        x3 = (r3[..., j, :, :, :] - r3[..., i, :, :, :]
              - np.einsum("...ab,...c->...abc", running[1][..., i, :, :], x1)
              - np.einsum("...a,...bc->...abc", r1[..., i, :], x2))
        out.append(x3)
    return tuple(out)


@dataclass
class RoughPathLevels:
    """Grid-indexed lift of a piecewise-linear path, levels 1..``level``.

    ``segments[k-1]`` holds the level-k tensor of every grid interval
    [t_{j-1}, t_j]; tensors over wider windows come from Chen
    composition (see :func:`interval_tensors`).
    """

    grid: TimeGrid
    level: int
    segments: tuple[np.ndarray, ...]

    def __post_init__(self):
        self.level = _check_level(self.level)
        if len(self.segments) != self.level:
            raise ConfigurationError("segment tuple does not match declared level")
        n = self.grid.n_segments
        d = self.segments[0].shape[-1]
        for k, s in enumerate(self.segments, start=1):
            if s.shape != (n,) + (d,) * k:
                raise ConfigurationError(f"level-{k} segment tensor has wrong shape")
        self._running: tuple[np.ndarray, ...] | None = None

    @property
    def dim(self) -> int:
        return self.segments[0].shape[-1]

    def running(self) -> tuple[np.ndarray, ...]:
        if self._running is None:
            self._running = running_levels(self.segments)
        return self._running

    def interval(self, i: int, j: int) -> tuple[np.ndarray, ...]:
        if not 0 <= i < j <= self.grid.n_segments:
            raise ConfigurationError(f"bad interval ({i}, {j})")
        return interval_tensors(self.running(), i, j)

    def window_indices(self, window: tuple[float, float] | None) -> tuple[int, int]:
        if window is None:
            return 0, self.grid.n_segments
        i0 = self.grid.index_of(window[0])
        i1 = self.grid.index_of(window[1])
        if i0 >= i1:
            raise ConfigurationError("window must have positive length")
        return i0, i1


def lift_piecewise_linear(path: SamplePath, level: int) -> RoughPathLevels:
    """Exact iterated-integral lift of the piecewise-linear ``path``."""
    return RoughPathLevels(path.grid, _check_level(level),
                           segment_tensors(path.increments(), level))


def levy_area_running(values: np.ndarray) -> np.ndarray:
    """Running Lévy area A_{0,t} (antisymmetric level-2 part) at all nodes.

    ``values``: (..., N+1, d) node values; returns (..., N+1, d, d).
    """
    inc = np.diff(values, axis=-2)
    r = running_levels(segment_tensors(inc, 2))
    return 0.5 * (r[1] - np.swapaxes(r[1], -1, -2))


# ---------------------------------------------------------------------------
# p-variation machinery
# ---------------------------------------------------------------------------

def _pair_costs(running: tuple[np.ndarray, ...], k: int, q: float,
                i0: int, i1: int, other: tuple[np.ndarray, ...] | None = None,
                row_chunk: int = 128) -> np.ndarray:
    """|x^k_{i,j}|^q (or of the levelwise difference) for window node pairs."""
    nn = i1 - i0 + 1
    costs = np.zeros((nn, nn))
    idx = np.arange(i0, i1 + 1)
    for lo in range(0, nn, row_chunk):
        hi = min(lo + row_chunk, nn)
        rows = idx[lo:hi]
        x = _interval_block(running, rows, idx, k)
        if other is not None:
            x = x - _interval_block(other, rows, idx, k)
        costs[lo:hi, :] = _hs(x, k) ** q
    iu = np.tril_indices(nn)
    costs[iu] = 0.0
    return costs


def _interval_block(running, rows, cols, k):
    """Interval tensors x^k_{i,j} for i in rows, j in cols (vectorized)."""
    r1 = running[0]
    x1 = r1[cols][None, :, :] - r1[rows][:, None, :]
    if k == 1:
        return x1
    r2 = running[1]
    x2 = (r2[cols][None, :, :, :] - r2[rows][:, None, :, :]
          - r1[rows][:, None, :, None] * x1[:, :, None, :])
    if k == 2:
        return x2
    r3 = running[2]
    return (r3[cols][None, :, :, :, :] - r3[rows][:, None, :, :, :]
            - r2[rows][:, None, :, :, None] * x1[:, :, None, None, :]
            - r1[rows][:, None, :, None, None] * x2[:, :, None, :, :])


def pvar_seminorm(levels: RoughPathLevels, k: int, p: float,
                  window: tuple[float, float] | None = None) -> float:
    """||x^k||_{p/k-var} over ``window``: exact sup over grid-node partitions.

    For level 1 on piecewise-linear paths this equals the continuum
    p-variation, since within-segment increments are colinear.
    """
    k = int(k)
    if not 1 <= k <= levels.level:
        raise ConfigurationError(f"lift carries levels 1..{levels.level}, asked for {k}")
    p = float(p)
    if p < k:
        raise ConfigurationError(f"need p >= k so that q = p/k >= 1 (p={p}, k={k})")
    i0, i1 = levels.window_indices(window)
    costs = _pair_costs(levels.running(), k, p / k, i0, i1)
    return float(kernels.pvar_dp(costs)) ** (k / p)


def _used_levels(levels: RoughPathLevels, p: float) -> int:
    return min(levels.level, max(1, int(floor(p))), MAX_LEVEL)


def intrinsic_control(levels: RoughPathLevels, p: float,
                      window: tuple[float, float] | None = None) -> float:
    """The control omega(s,t) = sum_k ||x^k||^{p/k}_{p/k-var, window}.

    Levels run over 1..min(floor(p), carried level, 3).  Superadditive
    in the window on grid-node triples.
    """
    p = float(p)
    if p < 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    i0, i1 = levels.window_indices(window)
    run = levels.running()
    omega = 0.0
    for k in range(1, _used_levels(levels, p) + 1):
        costs = _pair_costs(run, k, p / k, i0, i1)
        omega += float(kernels.pvar_dp(costs))
    return omega


def homogeneous_pvar_norm(levels: RoughPathLevels, p: float,
                          window: tuple[float, float] | None = None) -> float:
    """Homogeneous p-variation norm: the intrinsic control to the power 1/p."""
    return intrinsic_control(levels, p, window) ** (1.0 / float(p))


def pvar_distance(a: RoughPathLevels, b: RoughPathLevels, p: float) -> float:
    """Inhomogeneous distance: max_k ||x^k - y^k||_{p/k-var} on a common grid."""
    if a.grid != b.grid:
        raise ConfigurationError("p-variation distance needs a common grid")
    if a.level != b.level or a.dim != b.dim:
        raise ConfigurationError("lifts must share level and dimension")
    p = float(p)
    if p < a.level:
        raise ConfigurationError(f"need p >= level (p={p}, level={a.level})")
    i0, i1 = 0, a.grid.n_segments
    ra, rb = a.running(), b.running()
    worst = 0.0
    for k in range(1, a.level + 1):
        costs = _pair_costs(ra, k, p / k, i0, i1, other=rb)
        worst = max(worst, float(kernels.pvar_dp(costs)) ** (k / p))
    return worst


def n_functional(levels: RoughPathLevels, p: float, beta: float,
                 window_cap: float = 1.0) -> tuple[int, np.ndarray]:
    """Greedy block count of the control against threshold ``beta``.

    tau_0 = 0 and tau_m is the first grid node t > tau_{m-1} with
    omega(tau_{m-1}, t) >= beta (">=" at equality, capped at 1); the
    count is #{m : tau_m < 1}.  Returns (count, break times), where a
    trailing 1.0 appears iff the threshold was met exactly at t = 1.
    """
    p = float(p)
    beta = float(beta)
    if beta <= 0:
        raise ConfigurationError(f"beta must be positive, got {beta}")
    if p < 1:
        raise ConfigurationError(f"p must be >= 1, got {p}")
    del window_cap  # the grid already ends at 1
    used = _used_levels(levels, p)
    run = levels.running()
    d = levels.dim
    r1 = run[0]
    r2 = run[1] if used >= 2 else np.zeros((0, d, d))
    r3 = run[2] if used >= 3 else np.zeros((0, d, d, d))
    count, breaks = kernels.nfunc_scan(np.ascontiguousarray(r1),
                                       np.ascontiguousarray(r2),
                                       np.ascontiguousarray(r3),
                                       used, p, beta)
    return int(count), levels.grid.times[np.asarray(breaks, dtype=int)]


# ---------------------------------------------------------------------------
# dilations and consistency diagnostics
# ---------------------------------------------------------------------------

def dilate(levels: RoughPathLevels, scale) -> RoughPathLevels:
    """Dilation: level k scales by c^k (scalar) or transforms by A^{⊗k}."""
    segs = []
    if np.ndim(scale) == 0:
        c = float(scale)
        for k, s in enumerate(levels.segments, start=1):
            segs.append(c ** k * s)
    else:
        a = np.asarray(scale, dtype=float)
        if a.shape != (levels.dim, levels.dim):
            raise ConfigurationError("dilation matrix must be d x d")
        s1 = np.einsum("ai,ni->na", a, levels.segments[0])
        segs.append(s1)
        if levels.level >= 2:
            segs.append(np.einsum("ai,bj,nij->nab", a, a, levels.segments[1]))
        if levels.level >= 3:
            segs.append(np.einsum("ai,bj,ck,nijk->nabc", a, a, a, levels.segments[2]))
    return RoughPathLevels(levels.grid, levels.level, tuple(segs))


def _level_scales(levels: RoughPathLevels) -> dict[int, float]:
    run = levels.running()
    nn = levels.grid.n_segments + 1
    idx = np.arange(nn)
    maxima = {}
    for k in range(1, levels.level + 1):
        block = _interval_block(run, idx, idx, k)
        maxima[k] = float(np.max(_hs(block, k)))
    scales = {}
    for k in range(1, levels.level + 1):
        s = 1.0 + maxima[k]
        for a in range(1, k):
            s += maxima[a] * maxima[k - a]
        scales[k] = s
    return scales


def chen_defect(levels: RoughPathLevels) -> float:
    """Worst relative Chen residual over all grid-node triples s < u < t."""
    run = levels.running()
    nn = levels.grid.n_segments + 1
    idx = np.arange(nn)
    scales = _level_scales(levels)
    worst = 0.0
    for u in range(1, nn - 1):
        left = {k: _interval_block(run, idx[:u], np.array([u]), k)[:, 0]
                for k in range(1, levels.level + 1)}
        right = {k: _interval_block(run, np.array([u]), idx[u + 1:], k)[0]
                 for k in range(1, levels.level + 1)}
        for k in range(1, levels.level + 1):
            whole = _interval_block(run, idx[:u], idx[u + 1:], k)
            comp = left[k][:, None] + right[k][None, :]
            if k == 2:
                comp = comp + np.einsum("ia,jb->ijab", left[1], right[1])
            if k == 3:
                comp = comp + (np.einsum("iab,jc->ijabc", left[2], right[1])
                               + np.einsum("ia,jbc->ijabc", left[1], right[2]))
            worst = max(worst, float(np.max(_hs(whole - comp, k))) / scales[k])
    return worst


def shuffle_defect(levels: RoughPathLevels) -> float:
    """Worst relative geometricity residual Sym(x^2) - (x^1)^{⊗2}/2 over pairs."""
    if levels.level < 2:
        raise ConfigurationError("shuffle check needs a level-2 lift")
    run = levels.running()
    nn = levels.grid.n_segments + 1
    idx = np.arange(nn)
    x1 = _interval_block(run, idx, idx, 1)
    x2 = _interval_block(run, idx, idx, 2)
    sym = 0.5 * (x2 + np.swapaxes(x2, -1, -2))
    resid = sym - 0.5 * np.einsum("ija,ijb->ijab", x1, x1)
    scale = 1.0 + float(np.max(_hs(x1, 1))) ** 2 + float(np.max(_hs(x2, 2)))
    return float(np.max(_hs(resid, 2))) / scale


def lift_between(path: SamplePath, s: float, t: float, level: int) -> tuple[np.ndarray, ...]:
    """Exact lift of the piecewise-linear interpolant over arbitrary [s, t]."""
    level = _check_level(level)
    if not 0.0 <= s < t <= 1.0:
        raise ConfigurationError("need 0 <= s < t <= 1")
    times = path.grid.times
    cuts = [s] + [float(u) for u in times if s < u < t] + [t]
    vals = np.vstack([
        [np.interp(u, times, path.values[:, c]) for c in range(path.dim)]
        for u in cuts
    ])
    inc = np.diff(vals, axis=0)
    pieces = segment_tensors(inc, level)
    acc = tuple(pieces[k][0] for k in range(level))
    for j in range(1, inc.shape[0]):
        acc = chen_compose(acc, tuple(pieces[k][j] for k in range(level)))
    return acc


def level3_consistency_check(path: SamplePath, depths: tuple[int, ...] = (0, 2, 4, 6)) -> np.ndarray:
    """Residual of the level-3 refinement-limit formula at dyadic depths.

    The limit construction rebuilds x^3_{0,1} from levels 1-2 summed over
    a partition; at depth k every grid segment is split into 2^k equal
    parts.  Residuals are Hilbert-Schmidt norms against the closed-form
    level-3 lift and must decrease toward 0 as the mesh refines.
    """
    exact = lift_piecewise_linear(path, 3).running()[2][-1]
    out = []
    for depth in depths:
        splits = 2 ** int(depth)
        times = path.grid.times
        refined = np.unique(np.concatenate([
            np.linspace(times[i], times[i + 1], splits + 1) for i in range(times.size - 1)
        ]))
        refined[0], refined[-1] = 0.0, 1.0
        rp = interpolate_to(path, TimeGrid(refined))
        run = running_levels(segment_tensors(rp.increments(), 2))
        inc1 = np.diff(run[0], axis=0)
        seg2 = np.diff(run[1], axis=0) - np.einsum("na,nb->nab", run[0][:-1], inc1)
        approx = (np.einsum("nab,nc->abc", run[1][:-1], inc1)
                  + np.einsum("na,nbc->abc", run[0][:-1], seg2))
        out.append(float(np.sqrt(np.sum((approx - exact) ** 2))))
    return np.asarray(out)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def lift_to_csv(levels: RoughPathLevels, file) -> None:
    """Rows: (interval_index, t_start, t_end, level, multi_index, value)."""
    w = csv.writer(file)
    w.writerow(["interval", "t_start", "t_end", "level", "multi_index", "value"])
    t = levels.grid.times
    d = levels.dim
    for j in range(levels.grid.n_segments):
        for k in range(1, levels.level + 1):
            tensor = levels.segments[k - 1][j]
            for multi in product(range(d), repeat=k):
                w.writerow([j, repr(float(t[j])), repr(float(t[j + 1])), k,
                            ";".join(str(a + 1) for a in multi),
                            repr(float(tensor[multi]))])
