"""Segmentwise solver for systems driven by piecewise-linear paths.

On each grid segment the driver has constant slope, so the system is an
autonomous ODE there; we integrate it with classical RK4 plus
step-doubling, carrying the state, the Jacobian J of the flow and its
inverse K when requested.  Drift is absorbed as an extra driver
coordinate with unit slope so one right-hand side covers everything.

Extensions (directional-derivative chains, covariance accumulators)
plug in through the small ``extras`` protocol: an object exposing
``width``, ``init``, ``rhs`` and ``record``; its flat block is packed
behind y, J, K and integrated with the same step control.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IntegrationFailureError
from .fbm import SamplePath, TimeGrid
from .vectorfields import VectorFieldModel

__all__ = [
    "SolvedSystem",
    "BatchSolution",
    "solve_driven",
    "solve_driven_batch",
    "solve_values_at",
    "evaluate_solution_sup_distance",
    "trajectory_to_csv",
    "DEFAULT_TOL",
    "BASE_SUBSTEPS",
    "MAX_SUBSTEPS",
    "JK_RESIDUAL_TOL",
]

DEFAULT_TOL = 1e-10
BASE_SUBSTEPS = 4
MAX_SUBSTEPS = 256
JK_RESIDUAL_TOL = 1e-8


@dataclass
class SolvedSystem:
    """Trajectory of one driven path, with variational data if tracked."""

    grid: TimeGrid
    values: np.ndarray                     # (N+1, e)
    jacobian: np.ndarray | None            # (N+1, e, e)
    inverse_jacobian: np.ndarray | None    # (N+1, e, e)
    driver: SamplePath
    model_name: str
    diagnostics: dict = field(default_factory=dict)

    @property
    def state_dim(self) -> int:
        return self.values.shape[1]

    def terminal_value(self) -> np.ndarray:
        return self.values[-1]


@dataclass
class BatchSolution:
    """Stacked trajectories of an ensemble solved against one grid."""

    grid: TimeGrid
    values: np.ndarray                     # (B, N+1, e)
    jacobian: np.ndarray | None
    inverse_jacobian: np.ndarray | None
    model_name: str
    diagnostics: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.values.shape[0]


def extended_slopes(grid: TimeGrid, driver_values: np.ndarray) -> np.ndarray:
    """Per-segment slopes (B, N, d+1): driver increments over dt, then 1.

    The trailing unit coordinate is the time slope that carries the
    drift once sigma is extended with b as an extra column.
    """
    dt = grid.dt[None, :, None]
    dw = np.diff(driver_values, axis=1)
    out = np.empty(dw.shape[:2] + (dw.shape[2] + 1,))
    out[:, :, :-1] = dw / dt
    out[:, :, -1] = 1.0
    return out


def _sigma_ext(model: VectorFieldModel, y: np.ndarray, order: int) -> np.ndarray:
    """Derivative tensors of [sigma | b], shape (B, e, d+1) + (e,)*order."""
    sig = model.sigma_derivative(y, order)
    dri = model.drift_derivative(y, order)
    axis = 2
    return np.concatenate([sig, np.expand_dims(dri, axis)], axis=axis)


class _Layout:
    """Flat-state packing: y, then J and K row-major, then an extra block."""

    def __init__(self, e: int, with_jacobian: bool, extra_width: int):
        self.e = e
        self.with_jacobian = with_jacobian
        self.extra_width = extra_width
        self.width = e + (2 * e * e if with_jacobian else 0) + extra_width

    def pack(self, y, jac=None, inv=None, extra=None) -> np.ndarray:
        b = y.shape[0]
        parts = [y.reshape(b, -1)]
        if self.with_jacobian:
            parts += [jac.reshape(b, -1), inv.reshape(b, -1)]
        if self.extra_width:
            parts.append(extra.reshape(b, -1))
        return np.concatenate(parts, axis=1)

    def unpack(self, flat: np.ndarray):
        b = flat.shape[0]
        e = self.e
        y = flat[:, :e]
        jac = inv = extra = None
        off = e
        if self.with_jacobian:
            jac = flat[:, off:off + e * e].reshape(b, e, e)
            off += e * e
            inv = flat[:, off:off + e * e].reshape(b, e, e)
            off += e * e
        if self.extra_width:
            extra = flat[:, off:]
        return y, jac, inv, extra


def _rk4_sweep(rhs, state: np.ndarray, dt: float, nsub: int) -> np.ndarray:
    h = dt / nsub
    s = state
    for _ in range(nsub):
        k1 = rhs(s)
        k2 = rhs(s + (0.5 * h) * k1)
        k3 = rhs(s + (0.5 * h) * k2)
        k4 = rhs(s + h * k3)
        s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return s


def _advance_segment(rhs, state, dt, tol, base_substeps, max_substeps, seg_index):
    """One segment with step-doubling: accept the fine sweep when the
    coarse/fine discrepancy is within tol, else double up to the cap."""
    nsub = base_substeps
    while True:
        coarse = _rk4_sweep(rhs, state, dt, nsub)
        fine = _rk4_sweep(rhs, state, dt, 2 * nsub)
        err = float(np.max(np.abs(coarse - fine) / (1.0 + np.abs(fine))))
        if not np.isfinite(err):
            raise IntegrationFailureError(
                f"non-finite state while integrating segment {seg_index}",
                segment_index=seg_index)
        if err <= tol:
            return fine, 2 * nsub, err
        if 2 * nsub >= max_substeps:
            raise IntegrationFailureError(
                f"segment {seg_index}: step-doubling error {err:.3e} still "
                f"above tol {tol:.1e} at {2 * nsub} substeps",
                segment_index=seg_index)
        nsub *= 2


def integrate_driven(model: VectorFieldModel, grid: TimeGrid,
                     driver_values: np.ndarray, *, with_jacobian: bool,
                     extras=None, record=None, tol: float = DEFAULT_TOL,
                     base_substeps: int = BASE_SUBSTEPS,
                     max_substeps: int = MAX_SUBSTEPS,
                     jk_tol: float = JK_RESIDUAL_TOL,
                     t_stop: float | None = None):
    """Core loop shared by all solvers.

    driver_values: (B, N+1, d) piecewise-linear driver at the grid nodes.
    record(node_index, y, jac, inv, extra) is called at node 0 and after
    each completed segment.  With ``t_stop`` inside a segment, that
    segment is integrated only up to t_stop (no record call for it) and
    the final flat state is returned.  Returns (y, jac, inv, extra,
    diagnostics) for the last state reached.
    """
    if driver_values.ndim != 3:
        raise ConfigurationError("driver_values must be (B, N+1, d)")
    b, n_nodes, d = driver_values.shape
    if n_nodes != len(grid.times):
        raise ConfigurationError("driver values and grid node counts differ")
    if d != model.driver_dim:
        raise ConfigurationError(
            f"driver dim {d} does not match model driver dim {model.driver_dim}")
    e = model.state_dim
    model.require_order(1 if with_jacobian else 0)

    layout = _Layout(e, with_jacobian, extras.width if extras is not None else 0)
    y0 = np.zeros((b, e))
    eye = np.broadcast_to(np.eye(e), (b, e, e)).copy()
    state = layout.pack(y0, eye if with_jacobian else None,
                        eye.copy() if with_jacobian else None,
                        extras.init(b) if extras is not None else None)

    slopes = extended_slopes(grid, driver_values)
    times = grid.times
    n_seg = len(times) - 1
    if t_stop is not None:
        if not (times[0] <= t_stop <= times[-1]):
            raise ConfigurationError("t_stop outside the driver grid")

    def make_rhs(seg):
        v = slopes[:, seg, :]

        def rhs(flat):
            y, jac, inv, extra = layout.unpack(flat)
            sig = _sigma_ext(model, y, 0)
            dy = np.einsum("bej,bj->be", sig, v)
            djac = dinv = dextra = None
            if with_jacobian:
                grad = np.einsum("bejc,bj->bec", _sigma_ext(model, y, 1), v)
                djac = np.einsum("bec,bcf->bef", grad, jac)
                dinv = -np.einsum("bec,bcf->bef", inv, grad)
            if extras is not None:
                dextra = extras.rhs(y, jac, inv, extra, v, seg)
            return layout.pack(dy, djac, dinv, dextra)

        return rhs

    substeps = np.zeros(n_seg, dtype=int)
    max_err = 0.0
    max_jk = 0.0

    def emit(node):
        if record is not None:
            record(node, *layout.unpack(state))

    emit(0)
    for seg in range(n_seg):
        dt = times[seg + 1] - times[seg]
        partial = t_stop is not None and t_stop < times[seg + 1] - 1e-15
        if partial:
            dt = t_stop - times[seg]
            if dt <= 1e-15:
                break
        state, nsub, err = _advance_segment(
            make_rhs(seg), state, dt, tol, base_substeps, max_substeps, seg)
        substeps[seg] = nsub
        max_err = max(max_err, err)
        if with_jacobian:
            _, jac, inv, _ = layout.unpack(state)
            resid = float(np.max(np.abs(
                np.einsum("bec,bcf->bef", jac, inv) - np.eye(e))))
            max_jk = max(max_jk, resid)
            if resid > jk_tol:
                raise IntegrationFailureError(
                    f"segment {seg}: Jacobian-inverse residual {resid:.3e} "
                    f"exceeds {jk_tol:.1e}", segment_index=seg)
        if partial:
            break
        emit(seg + 1)
        if t_stop is not None and abs(t_stop - times[seg + 1]) <= 1e-15:
            break

    diagnostics = {
        "substeps": substeps,
        "max_step_error": max_err,
        "max_jk_residual": max_jk if with_jacobian else None,
        "tol": tol,
    }
    y, jac, inv, extra = layout.unpack(state)
    return y, jac, inv, extra, diagnostics


def solve_driven_batch(model: VectorFieldModel, grid: TimeGrid,
                       driver_values: np.ndarray, *, with_jacobian: bool = False,
                       tol: float = DEFAULT_TOL,
                       base_substeps: int = BASE_SUBSTEPS,
                       max_substeps: int = MAX_SUBSTEPS) -> BatchSolution:
    """Solve an ensemble of drivers on one grid, recording every node."""
    b, n_nodes, _ = driver_values.shape
    e = model.state_dim
    values = np.empty((b, n_nodes, e))
    jac = np.empty((b, n_nodes, e, e)) if with_jacobian else None
    inv = np.empty((b, n_nodes, e, e)) if with_jacobian else None

    def record(node, y, j, k, _extra):
        values[:, node, :] = y
        if with_jacobian:
            jac[:, node] = j
            inv[:, node] = k

    *_rest, diagnostics = integrate_driven(
        model, grid, driver_values, with_jacobian=with_jacobian,
        record=record, tol=tol, base_substeps=base_substeps,
        max_substeps=max_substeps)
    return BatchSolution(grid, values, jac, inv, model.name, diagnostics)


def solve_driven(model: VectorFieldModel, driver: SamplePath, *,
                 with_jacobian: bool = False, tol: float = DEFAULT_TOL,
                 base_substeps: int = BASE_SUBSTEPS,
                 max_substeps: int = MAX_SUBSTEPS) -> SolvedSystem:
    """Solve one driven path; see solve_driven_batch for ensembles."""
    batch = solve_driven_batch(model, driver.grid, driver.values[None],
                               with_jacobian=with_jacobian, tol=tol,
                               base_substeps=base_substeps,
                               max_substeps=max_substeps)
    return SolvedSystem(
        grid=driver.grid,
        values=batch.values[0],
        jacobian=None if batch.jacobian is None else batch.jacobian[0],
        inverse_jacobian=(None if batch.inverse_jacobian is None
                          else batch.inverse_jacobian[0]),
        driver=driver,
        model_name=model.name,
        diagnostics=batch.diagnostics,
    )


def solve_values_at(model: VectorFieldModel, grid: TimeGrid,
                    driver_values: np.ndarray, t: float, *,
                    tol: float = DEFAULT_TOL,
                    base_substeps: int = BASE_SUBSTEPS,
                    max_substeps: int = MAX_SUBSTEPS) -> np.ndarray:
    """Terminal states y_t (B, e) without storing trajectories.

    Used by density estimation, where ensembles are large and only the
    marginal at one time is needed; t may fall inside a segment, in
    which case the final segment is integrated partially.
    """
    y, *_ = integrate_driven(model, grid, driver_values, with_jacobian=False,
                             tol=tol, base_substeps=base_substeps,
                             max_substeps=max_substeps, t_stop=float(t))
    return y


def evaluate_solution_sup_distance(first: SolvedSystem, second: SolvedSystem,
                                   tol: float = 1e-12) -> float:
    """Max Euclidean distance between two solutions over shared nodes.

    Nodes are matched by time up to ``tol``; the coarser solution's grid
    does not need to be a subset of the finer one, only the overlap is
    compared, and at least two shared nodes are required.
    """
    ta, tb = first.grid.times, second.grid.times
    pos = np.searchsorted(tb, ta)
    pos = np.clip(pos, 0, len(tb) - 1)
    left = np.clip(pos - 1, 0, len(tb) - 1)
    use_left = np.abs(tb[left] - ta) < np.abs(tb[pos] - ta)
    match = np.where(use_left, left, pos)
    ok = np.abs(tb[match] - ta) <= tol
    if np.count_nonzero(ok) < 2:
        raise ConfigurationError("solutions share fewer than two grid nodes")
    if first.values.shape[1] != second.values.shape[1]:
        raise ConfigurationError("solutions have different state dims")
    diff = first.values[ok] - second.values[match[ok]]
    return float(np.max(np.linalg.norm(diff, axis=1)))


def trajectory_to_csv(solved: SolvedSystem, fileobj) -> None:
    """Write t, y_1..y_e (and J, K columns when tracked) as CSV."""
    e = solved.state_dim
    header = ["t"] + [f"y_{i + 1}" for i in range(e)]
    if solved.jacobian is not None:
        header += [f"J_{i + 1}{j + 1}" for i in range(e) for j in range(e)]
        header += [f"K_{i + 1}{j + 1}" for i in range(e) for j in range(e)]
    writer = csv.writer(fileobj)
    writer.writerow(header)
    for n, t in enumerate(solved.grid.times):
        row = [f"{t:.17g}"] + [f"{v:.17g}" for v in solved.values[n]]
        if solved.jacobian is not None:
            row += [f"{v:.17g}" for v in solved.jacobian[n].ravel()]
            row += [f"{v:.17g}" for v in solved.inverse_jacobian[n].ravel()]
        writer.writerow(row)
