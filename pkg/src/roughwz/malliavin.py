"""Directional derivatives and Malliavin covariance along solutions.

Perturbing the driver w -> w + eps*h and expanding the solution in eps
gives coefficients u_k; the order-k derivative is Xi_k = k! u_k.  Each
u_k solves the variational equation with a source built from lower
orders, so variation of constants turns the whole chain into extra
integrated states I_k with

    dI_k = K * k! * [ (S_k - grad(sig~)<u_k>) v~ + S_{k-1} h~ ] dt,
    Xi_k = J I_k,

where sig~ = [sigma | b] is the drift-extended field, v~ the extended
driver slope, h~ the direction slope with zero time coordinate, and
S_k the eps^k coefficient of sig~(y + sum eps^j u_j), a sum over
integer partitions of k.  The combinatorial weights come out of the
partition enumeration rather than being hard-coded.

The covariance matrix at time t contracts the increment Gram matrix of
the driving noise with A_j = (Q(t_j) - Q(t_{j-1})) / dt_j, where
Q = int K sigma ds (the drift column is not part of the noise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .fbm import IncrementGram, SamplePath, TimeGrid, increment_gram, sample_fbm
from .ode import (DEFAULT_TOL, _sigma_ext, extended_slopes, integrate_driven)
from .vectorfields import VectorFieldModel

__all__ = [
    "DerivativePath",
    "MalliavinCovariance",
    "covariance_samples",
    "directional_derivative",
    "malliavin_covariance",
    "nondegeneracy_report",
]


def _partitions(k: int) -> list[tuple[tuple[int, ...], float]]:
    """Integer partitions of k with weight 1/prod(multiplicity!).

    The weight is (number of ordered compositions) / l! for a partition
    with l parts, which is exactly the coefficient each contracted
    derivative tensor picks up in the eps-expansion of sig~(y^eps).
    """
    out = []

    def rec(remaining, max_part, acc):
        if remaining == 0:
            counts = {}
            for p in acc:
                counts[p] = counts.get(p, 0) + 1
            weight = 1.0
            for c in counts.values():
                weight /= math.factorial(c)
            out.append((tuple(acc), weight))
            return
        for p in range(min(remaining, max_part), 0, -1):
            rec(remaining - p, p, acc + [p])

    rec(k, k, [])
    return out


def _contract(tensor: np.ndarray, vectors) -> np.ndarray:
    """Contract trailing derivative axes of (B, e, d+1, e, ..) with (B, e) vectors."""
    t = tensor
    for u in vectors:
        t = np.einsum("b...c,bc->b...", t, u)
    return t


class _DerivativeChain:
    """Extras block integrating I_1..I_n for one direction."""

    def __init__(self, model: VectorFieldModel, order: int, h_slopes: np.ndarray):
        self.model = model
        self.order = order
        self.h_slopes = h_slopes
        self.width = order * model.state_dim
        self._parts = {k: _partitions(k) for k in range(1, order + 1)}

    def init(self, b: int) -> np.ndarray:
        return np.zeros((b, self.width))

    def rhs(self, y, jac, inv, extra, v, seg):
        model, n = self.model, self.order
        b, e = y.shape
        states = extra.reshape(b, n, e)
        dsig = {l: _sigma_ext(model, y, l) for l in range(n + 1)}
        u = {j: np.einsum("bec,bc->be", jac, states[:, j - 1]) / math.factorial(j)
             for j in range(1, n)}
        h = self.h_slopes[:, seg]
        out = np.empty((b, n, e))
        s_prev = dsig[0]
        for k in range(1, n + 1):
            g = np.einsum("bej,bj->be", s_prev, h)
            sv = np.zeros_like(s_prev)
            for parts, weight in self._parts[k]:
                if len(parts) < 2:
                    continue
                sv += weight * _contract(dsig[len(parts)], [u[j] for j in parts])
            g += np.einsum("bej,bj->be", sv, v)
            out[:, k - 1] = math.factorial(k) * np.einsum("bec,bc->be", inv, g)
            if k < n:
                s_prev = sv + _contract(dsig[1], [u[k]])
        return out.reshape(b, -1)


@dataclass
class DerivativePath:
    """Directional derivatives Xi_1..Xi_n of one solution at every node."""

    grid: TimeGrid
    order: int
    values: np.ndarray            # (order, N+1, e)
    direction: np.ndarray         # (N+1, d) nodes of the direction path
    model_name: str
    diagnostics: dict = field(default_factory=dict)

    def level(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.order:
            raise ConfigurationError(f"derivative order {k} not computed")
        return self.values[k - 1]


def _direction_values(direction, driver: SamplePath) -> np.ndarray:
    if isinstance(direction, SamplePath):
        if not np.array_equal(direction.grid.times, driver.grid.times):
            raise ConfigurationError(
                "direction must live on the same grid as the driver")
        vals = direction.values
    else:
        vals = np.asarray(direction, dtype=float)
    if vals.shape != driver.values.shape:
        raise ConfigurationError(
            f"direction shape {vals.shape} does not match driver "
            f"{driver.values.shape}")
    if np.max(np.abs(vals[0])) > 1e-14:
        raise ConfigurationError("direction paths must start at zero")
    return vals


def directional_derivative(model: VectorFieldModel, driver: SamplePath,
                           direction, order: int = 1, *,
                           tol: float = DEFAULT_TOL) -> DerivativePath:
    """Derivatives of the solution map in a path direction, to given order."""
    if order < 1:
        raise ConfigurationError("derivative order must be at least 1")
    model.require_order(order + 1)
    h_values = _direction_values(direction, driver)

    h_slopes = extended_slopes(driver.grid, h_values[None])
    h_slopes[:, :, -1] = 0.0
    chain = _DerivativeChain(model, order, h_slopes)

    n_nodes = len(driver.grid.times)
    xi = np.zeros((order, n_nodes, model.state_dim))

    def record(node, y, jac, inv, extra):
        states = extra.reshape(1, order, model.state_dim)
        xi[:, node, :] = np.einsum("bec,bkc->bke", jac, states)[0]

    *_state, diagnostics = integrate_driven(
        model, driver.grid, driver.values[None], with_jacobian=True,
        extras=chain, record=record, tol=tol)
    return DerivativePath(driver.grid, order, xi, h_values, model.name,
                          diagnostics)


@dataclass
class MalliavinCovariance:
    """Covariance matrices of the solution at selected grid times."""

    times: np.ndarray             # (n_times,)
    matrices: np.ndarray          # (n_times, e, e)
    hurst: float
    model_name: str

    def min_eigenvalues(self) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(m)[0] for m in self.matrices])

    def determinants(self) -> np.ndarray:
        return np.array([np.linalg.det(m) for m in self.matrices])


class _CovarianceAccumulator:
    """Extras block integrating Q = int K sigma ds."""

    def __init__(self, model: VectorFieldModel):
        self.model = model
        self.width = model.state_dim * model.driver_dim

    def init(self, b: int) -> np.ndarray:
        return np.zeros((b, self.width))

    def rhs(self, y, jac, inv, extra, v, seg):
        b = y.shape[0]
        dq = np.einsum("bec,bcd->bed", inv, self.model.sigma_derivative(y, 0))
        return dq.reshape(b, -1)


def _covariance_from_nodes(q_nodes, jac_nodes, gram: IncrementGram, grid: TimeGrid,
                           node_indices) -> np.ndarray:
    """(B, n_times, e, e) from per-node Q and J; double Gram sum per time."""
    a = np.diff(q_nodes, axis=1) / grid.dt[None, :, None, None]
    out = np.empty((q_nodes.shape[0], len(node_indices),
                    q_nodes.shape[2], q_nodes.shape[2]))
    for pos, i in enumerate(node_indices):
        g = gram.matrix[:i, :i]
        core = np.einsum("jk,bjec,bkfc->bef", g, a[:, :i], a[:, :i])
        j = jac_nodes[:, i]
        sig = np.einsum("bec,bcf,bgf->beg", j, core, j)
        out[:, pos] = 0.5 * (sig + np.swapaxes(sig, 1, 2))
    return out


def malliavin_covariance(model: VectorFieldModel, driver: SamplePath, *,
                         gram: IncrementGram | None = None,
                         at_times=None, tol: float = DEFAULT_TOL) -> MalliavinCovariance:
    """Covariance matrix of the solution at the requested grid times.

    The Gram matrix defaults to the exact increment covariance for the
    driver's Hurst parameter; independent driver components share it.
    """
    grid = driver.grid
    if gram is None:
        if driver.hurst is None:
            raise ConfigurationError(
                "driver has no Hurst parameter; pass gram explicitly")
        gram = increment_gram(driver.hurst, grid)
    if not np.array_equal(gram.grid.times, grid.times):
        raise ConfigurationError("gram matrix grid does not match the driver")
    times = np.asarray([grid.times[-1]] if at_times is None else at_times,
                       dtype=float)
    node_indices = [grid.index_of(t) for t in times]
    if any(i == 0 for i in node_indices):
        raise ConfigurationError("covariance at t=0 is identically zero")

    e, d = model.state_dim, model.driver_dim
    n_nodes = len(grid.times)
    q_nodes = np.zeros((1, n_nodes, e, d))
    jac_nodes = np.zeros((1, n_nodes, e, e))

    def record(node, y, jac, inv, extra):
        q_nodes[:, node] = extra.reshape(1, e, d)
        jac_nodes[:, node] = jac

    *_state, _diag = integrate_driven(
        model, grid, driver.values[None], with_jacobian=True,
        extras=_CovarianceAccumulator(model), record=record, tol=tol)
    mats = _covariance_from_nodes(q_nodes, jac_nodes, gram, grid, node_indices)
    return MalliavinCovariance(times, mats[0], driver.hurst, model.name)


def covariance_samples(model: VectorFieldModel, h: float, m: int, count: int,
                       seed: int, *, t: float = 1.0,
                       tol: float = DEFAULT_TOL) -> list[MalliavinCovariance]:
    """Covariance matrices at time t for ``count`` independently sampled drivers.

    All paths run as one batch (one Gram factorization, one adaptive
    integration), so this is the cheap way to feed nondegeneracy_report.
    """
    grid = TimeGrid.uniform(m)
    ensemble = sample_fbm(h, grid, count, seed, dim=model.driver_dim)
    gram = increment_gram(h, grid)
    e, d = model.state_dim, model.driver_dim
    n_nodes = m + 1
    q_nodes = np.zeros((count, n_nodes, e, d))
    jac_nodes = np.zeros((count, n_nodes, e, e))

    def record(node, y, jac, inv, extra):
        q_nodes[:, node] = extra.reshape(count, e, d)
        jac_nodes[:, node] = jac

    *_state, _diag = integrate_driven(
        model, grid, ensemble.values, with_jacobian=True,
        extras=_CovarianceAccumulator(model), record=record, tol=tol)
    node = grid.index_of(t)
    if node == 0:
        raise ConfigurationError("covariance at t=0 is identically zero")
    mats = _covariance_from_nodes(q_nodes, jac_nodes, gram, grid, [node])
    times = np.array([t])
    return [MalliavinCovariance(times, mats[i], h, model.name)
            for i in range(count)]


def _sample_matrices(samples) -> np.ndarray:
    """Stack an (n, e, e) array out of covariance samples or raw matrices."""
    if isinstance(samples, np.ndarray):
        mats = samples
        if mats.ndim == 2:
            mats = mats[None]
    else:
        blocks = []
        for s in samples:
            blocks.append(s.matrices if isinstance(s, MalliavinCovariance)
                          else np.asarray(s, dtype=float)[None])
        if not blocks:
            raise ConfigurationError("nondegeneracy report needs samples")
        mats = np.concatenate(blocks, axis=0)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2] or mats.shape[0] == 0:
        raise ConfigurationError(
            f"expected a nonempty stack of square matrices, got {mats.shape}")
    return mats


def nondegeneracy_report(samples, *, floor: float = 1e-12,
                         inverse_orders=(1.0, 2.0)) -> dict:
    """Descriptive nondegeneracy statistics over covariance samples.

    ``samples`` is an iterable of MalliavinCovariance (each contributing
    all its per-time matrices) or an (n, e, e) array.  Reports quantiles
    of the smallest eigenvalue and of det, empirical inverse moments
    E[lambda_min^-q] with eigenvalues clipped at ``floor``, and
    ``floor_fraction``, the share of samples whose smallest eigenvalue
    fell at or below the floor.
    """
    mats = _sample_matrices(samples)
    lam_min = np.linalg.eigvalsh(mats)[:, 0]
    dets = np.linalg.det(mats)
    clipped = np.maximum(lam_min, floor)
    return {
        "count": int(mats.shape[0]),
        "dim": int(mats.shape[1]),
        "lambda_min": {
            "mean": float(np.mean(lam_min)),
            "q05": float(np.quantile(lam_min, 0.05)),
            "q50": float(np.quantile(lam_min, 0.50)),
            "q95": float(np.quantile(lam_min, 0.95)),
            "min": float(np.min(lam_min)),
        },
        "determinant": {
            "mean": float(np.mean(dets)),
            "stderr": float(np.std(dets, ddof=1) / np.sqrt(len(dets)))
            if len(dets) > 1 else 0.0,
            "q05": float(np.quantile(dets, 0.05)),
            "q50": float(np.quantile(dets, 0.50)),
            "min": float(np.min(dets)),
        },
        "inverse_moments": {
            f"{q:g}": float(np.mean(clipped ** (-q))) for q in inverse_orders
        },
        "floor": float(floor),
        "floor_fraction": float(np.mean(lam_min <= floor)),
    }
