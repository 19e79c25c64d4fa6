"""Convergence-rate studies over dyadic grid refinements.

Each study samples an ensemble of drivers, measures an approximation
error (or path statistic) at every mesh in a schedule, and fits a
power-law rate by least squares on log-log points.  Noise is shared
across meshes: the coarse driver at mesh m is the fine driver restricted
to the m-grid, so the fitted decay is a per-path comparison rather than
a comparison of independent ensembles.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .density import (default_delta, estimate_density, reference_density,
                      affine_gaussian_moments, sup_error)
from .errors import (ConfigurationError, InconclusiveStudyError,
                     OracleUnavailableError)
from .fbm import TimeGrid, require_lift_regime, sample_fbm, validate_hurst
from .ode import DEFAULT_TOL, solve_driven_batch
from .roughpath import levy_area_running, lift_piecewise_linear, n_functional
from .vectorfields import VectorFieldModel, model_preset

__all__ = [
    "StudyConfig",
    "RateFit",
    "ConvergenceReport",
    "fit_rate",
    "run_pathwise_study",
    "run_lift_study",
    "run_density_study",
    "run_nfunc_stats",
    "run_study",
    "REFERENCE_STREAM_OFFSET",
]

STUDY_KINDS = ("pathwise", "lift", "density", "nfunc")

# Path substream indices at and above this offset are reserved for
# reference ensembles, keeping them independent of the study ensembles
# drawn from the same seed.
REFERENCE_STREAM_OFFSET = 2 ** 32


@dataclass
class StudyConfig:
    """Declarative description of one convergence study.

    ``m_schedule`` lists the meshes under study; kinds that compare
    against a fine solve also need ``m_ref``, which every scheduled mesh
    must divide and which must be at least eight times the largest.
    """

    kind: str
    h: float
    m_schedule: tuple
    count: int
    seed: int
    m_ref: int | None = None
    model: str | None = None
    model_params: dict = field(default_factory=dict)
    dim: int = 2
    t: float = 1.0
    p: float | None = None
    beta: float | None = None
    eta: tuple = (0.25, 0.5)
    delta: float | None = None
    max_count: int | None = None
    tol: float = DEFAULT_TOL
    axis_points: int = 201

    def __post_init__(self):
        if self.kind not in STUDY_KINDS:
            raise ConfigurationError(
                f"unknown study kind {self.kind!r}; known: {STUDY_KINDS}")
        self.h = validate_hurst(self.h)
        self.m_schedule = tuple(int(m) for m in self.m_schedule)
        if len(self.m_schedule) < 1 or any(m < 1 for m in self.m_schedule):
            raise ConfigurationError("m_schedule needs positive meshes")
        if any(b <= a for a, b in zip(self.m_schedule, self.m_schedule[1:])):
            raise ConfigurationError("m_schedule must be strictly increasing")
        self.count = int(self.count)
        if self.count < 100:
            raise ConfigurationError("studies need count >= 100 paths")
        if self.kind in ("pathwise", "lift", "density"):
            if self.m_ref is None:
                raise ConfigurationError(f"{self.kind} studies need m_ref")
            self.m_ref = int(self.m_ref)
            if any(self.m_ref % m != 0 for m in self.m_schedule):
                raise ConfigurationError(
                    "every scheduled mesh must divide m_ref")
            if self.m_ref < 8 * max(self.m_schedule):
                raise ConfigurationError(
                    "m_ref must be at least 8x the largest scheduled mesh")
        if self.kind in ("lift", "nfunc"):
            require_lift_regime(self.h)
        if self.kind == "nfunc":
            if self.p is None or self.beta is None:
                raise ConfigurationError("nfunc studies need p and beta")
        if self.kind in ("pathwise", "density") and self.model is None:
            raise ConfigurationError(f"{self.kind} studies need a model preset")

    def build_model(self) -> VectorFieldModel:
        return model_preset(self.model, **self.model_params)


@dataclass
class RateFit:
    """Least-squares power-law fit err ~ C * m^(-rate) on log-log points."""

    rate: float
    intercept: float
    rate_stderr: float
    n_points: int
    log_points: list

    def as_dict(self) -> dict:
        return asdict(self)


def fit_rate(ms, errors) -> RateFit:
    """Fit log(err) = a + b*log(m) and report rate = -b.

    Exact zeros are excluded (they carry no log-scale information); at
    least three surviving points are required.
    """
    ms = np.asarray(ms, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if ms.shape != errors.shape or ms.ndim != 1:
        raise ConfigurationError("fit_rate needs matching 1-d arrays")
    keep = errors > 0
    ms, errors = ms[keep], errors[keep]
    if ms.size < 3:
        raise ConfigurationError(
            f"rate fit needs at least 3 nonzero points, got {ms.size}")
    x = np.log(ms)
    y = np.log(errors)
    a = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    dof = max(x.size - 2, 1)
    s2 = float(resid @ resid) / dof
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = float(np.sqrt(s2 / sxx))
    return RateFit(rate=float(-coef[1]), intercept=float(coef[0]),
                   rate_stderr=stderr, n_points=int(x.size),
                   log_points=[[float(a_), float(b_)] for a_, b_ in zip(x, y)])


@dataclass
class ConvergenceReport:
    """Per-mesh statistics plus the fitted rate for one study run."""

    kind: str
    hurst: float
    m_schedule: tuple
    count: int
    seed: int
    rows: list                    # dicts: m, stat_mean, stat_median, stat_q90, stderr
    rate: dict | None
    m_ref: int | None = None
    model_name: str | None = None
    count_final: int | None = None
    extra: dict = field(default_factory=dict)
    inconclusive: bool = False
    runtime_seconds: float = 0.0

    def as_dict(self) -> dict:
        out = asdict(self)
        out["m_schedule"] = list(self.m_schedule)
        return out

    def to_json(self, fileobj) -> None:
        json.dump(self.as_dict(), fileobj, indent=2, sort_keys=True)
        fileobj.write("\n")

    def to_csv(self, fileobj) -> None:
        w = csv.writer(fileobj)
        w.writerow(["m", "stat_mean", "stat_median", "stat_q90", "stderr"])
        for row in self.rows:
            w.writerow([row["m"], f"{row['stat_mean']:.17g}",
                        f"{row['stat_median']:.17g}", f"{row['stat_q90']:.17g}",
                        f"{row['stderr']:.17g}"])


def _stat_row(m: int, per_path: np.ndarray) -> dict:
    return {
        "m": int(m),
        "stat_mean": float(np.mean(per_path)),
        "stat_median": float(np.median(per_path)),
        "stat_q90": float(np.quantile(per_path, 0.90)),
        "stderr": float(np.std(per_path) / np.sqrt(per_path.size)),
    }


def _interpolate_batch(coarse: TimeGrid, values: np.ndarray,
                       fine: TimeGrid) -> np.ndarray:
    """Piecewise-linear node values of coarse paths on a finer grid."""
    tc, tf = coarse.times, fine.times
    seg = np.clip(np.searchsorted(tc, tf, side="right") - 1, 0,
                  tc.size - 2)
    frac = (tf - tc[seg]) / (tc[seg + 1] - tc[seg])
    frac = frac[None, :, None]
    return (1.0 - frac) * values[:, seg, :] + frac * values[:, seg + 1, :]


def run_pathwise_study(config: StudyConfig) -> ConvergenceReport:
    """Sup-norm error of solutions under coarsened drivers, per mesh.

    One fine ensemble is sampled on the m_ref grid; for each scheduled
    mesh the driver is restricted to the m-grid, re-read as a piecewise
    linear path on the fine grid, and both solutions are compared at
    every fine node.
    """
    if config.kind != "pathwise":
        raise ConfigurationError("config.kind must be 'pathwise'")
    start = time.perf_counter()
    model = config.build_model()
    grid_ref = TimeGrid.uniform(config.m_ref)
    ens = sample_fbm(config.h, grid_ref, config.count, config.seed,
                     dim=model.driver_dim)
    ref = solve_driven_batch(model, grid_ref, ens.values, tol=config.tol)

    rows = []
    for m in config.m_schedule:
        coarse_grid = TimeGrid.uniform(m)
        idx = coarse_grid.indices_in(grid_ref)
        coarse_vals = ens.values[:, idx, :]
        driver_fine = _interpolate_batch(coarse_grid, coarse_vals, grid_ref)
        sol = solve_driven_batch(model, grid_ref, driver_fine, tol=config.tol)
        err = np.max(np.linalg.norm(sol.values - ref.values, axis=2), axis=1)
        rows.append(_stat_row(m, err))

    rate = fit_rate([r["m"] for r in rows], [r["stat_mean"] for r in rows])
    return ConvergenceReport(
        kind="pathwise", hurst=config.h, m_schedule=config.m_schedule,
        count=config.count, seed=config.seed, rows=rows, rate=rate.as_dict(),
        m_ref=config.m_ref, model_name=model.name,
        runtime_seconds=time.perf_counter() - start)


def run_lift_study(config: StudyConfig) -> ConvergenceReport:
    """Sup discrepancy of running Lévy areas under coarsening, per mesh.

    The fine ensemble's running area is compared at the coarse nodes
    with the area of the coarse polygon; the statistic per path is the
    largest Hilbert-Schmidt discrepancy over those nodes.
    """
    if config.kind != "lift":
        raise ConfigurationError("config.kind must be 'lift'")
    if config.dim < 2:
        raise ConfigurationError("Lévy-area studies need driver dim >= 2")
    start = time.perf_counter()
    grid_ref = TimeGrid.uniform(config.m_ref)
    ens = sample_fbm(config.h, grid_ref, config.count, config.seed,
                     dim=config.dim)
    fine_area = levy_area_running(ens.values)

    rows = []
    for m in config.m_schedule:
        coarse_grid = TimeGrid.uniform(m)
        idx = coarse_grid.indices_in(grid_ref)
        coarse_area = levy_area_running(ens.values[:, idx, :])
        diff = fine_area[:, idx] - coarse_area
        err = np.max(np.sqrt(np.sum(diff * diff, axis=(2, 3))), axis=1)
        rows.append(_stat_row(m, err))

    rate = fit_rate([r["m"] for r in rows], [r["stat_mean"] for r in rows])
    return ConvergenceReport(
        kind="lift", hurst=config.h, m_schedule=config.m_schedule,
        count=config.count, seed=config.seed, rows=rows, rate=rate.as_dict(),
        m_ref=config.m_ref, runtime_seconds=time.perf_counter() - start)


def _density_reference(config: StudyConfig, model: VectorFieldModel):
    """Evaluation points and reference values (closed form if available,
    else a self-convergence estimate at m_ref on independent streams)."""
    try:
        mean, cov = affine_gaussian_moments(model, config.t)
        if abs(config.h - 0.5) > 1e-12:
            raise OracleUnavailableError("no closed form away from H = 1/2")
        axes = [np.linspace(mean[a] - 4.0 * np.sqrt(cov[a, a]),
                            mean[a] + 4.0 * np.sqrt(cov[a, a]),
                            config.axis_points)
                for a in range(model.state_dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([g.ravel() for g in mesh], axis=1)
        values = reference_density(model, config.h, config.t, points)
        return points, values, "closed_form"
    except OracleUnavailableError:
        pass
    ref_count = (config.count if config.max_count is None
                 else max(config.count, config.max_count))
    est = estimate_density(
        model, config.h, config.m_ref, ref_count, config.seed, t=config.t,
        delta=config.delta, axis_points=config.axis_points, tol=config.tol,
        first_index=REFERENCE_STREAM_OFFSET)
    return est.points, est.values, "self"


def run_density_study(config: StudyConfig) -> ConvergenceReport:
    """Sup-norm density error per mesh, with sample-size escalation.

    The per-mesh statistic is the sup over the evaluation grid of
    |p_hat_m - p_ref|.  After each pass the Monte Carlo standard error
    at the argmax of the finest-mesh estimate must not exceed a quarter
    of that mesh's sup error; otherwise the sample count is quadrupled,
    up to ``max_count``.  A run that exhausts the cap is flagged
    inconclusive.
    """
    if config.kind != "density":
        raise ConfigurationError("config.kind must be 'density'")
    start = time.perf_counter()
    model = config.build_model()
    delta = config.delta if config.delta is not None else default_delta(config.h)
    points, ref_values, ref_kind = _density_reference(config, model)
    cap = config.max_count if config.max_count is not None else config.count * 256

    count = config.count
    inconclusive = False
    while True:
        rows = []
        ests = []
        for m in config.m_schedule:
            est = estimate_density(model, config.h, m, count, config.seed,
                                   t=config.t, delta=delta, points=points,
                                   tol=config.tol)
            err = sup_error(est.values, ref_values)
            rows.append({
                "m": int(m),
                "stat_mean": err, "stat_median": err, "stat_q90": err,
                "stderr": float(est.stderr[int(np.argmax(est.values))]),
            })
            ests.append(est)
        finest = ests[-1]
        se_at_peak = float(finest.stderr[int(np.argmax(finest.values))])
        sup_finest = rows[-1]["stat_mean"]
        if se_at_peak <= sup_finest / 4.0:
            break
        if count * 4 > cap:
            inconclusive = True
            break
        count *= 4

    rate = None
    try:
        rate = fit_rate([r["m"] for r in rows],
                        [r["stat_mean"] for r in rows]).as_dict()
    except ConfigurationError:
        inconclusive = True
    return ConvergenceReport(
        kind="density", hurst=config.h, m_schedule=config.m_schedule,
        count=config.count, seed=config.seed, rows=rows, rate=rate,
        m_ref=config.m_ref, model_name=model.name, count_final=count,
        extra={"reference": ref_kind, "delta": delta,
               "se_at_peak": se_at_peak, "sup_finest": sup_finest},
        inconclusive=inconclusive,
        runtime_seconds=time.perf_counter() - start)


def run_nfunc_stats(config: StudyConfig) -> ConvergenceReport:
    """Distribution of the greedy block count N across meshes.

    Reports mean/median/q90 of N per mesh plus empirical exponential
    moments E[exp(eta N)] for each requested eta; the study is flagged
    stable when every moment varies by at most a factor of two across
    the schedule.
    """
    if config.kind != "nfunc":
        raise ConfigurationError("config.kind must be 'nfunc'")
    start = time.perf_counter()
    rows = []
    moments = {f"{eta:g}": [] for eta in config.eta}
    for m in config.m_schedule:
        ens = sample_fbm(config.h, m, config.count, config.seed,
                         dim=config.dim)
        counts = np.empty(config.count)
        for i, path in enumerate(ens):
            lift = lift_piecewise_linear(path, min(3, max(1, int(config.p))))
            counts[i], _ = n_functional(lift, config.p, config.beta)
        rows.append(_stat_row(m, counts))
        for eta in config.eta:
            moments[f"{eta:g}"].append(float(np.mean(np.exp(eta * counts))))

    stable = True
    for vals in moments.values():
        lo, hi = min(vals), max(vals)
        if hi > 2.0 * lo:
            stable = False
    return ConvergenceReport(
        kind="nfunc", hurst=config.h, m_schedule=config.m_schedule,
        count=config.count, seed=config.seed, rows=rows, rate=None,
        extra={"eta_moments": moments, "stable": stable,
               "p": config.p, "beta": config.beta},
        runtime_seconds=time.perf_counter() - start)


_RUNNERS = {
    "pathwise": run_pathwise_study,
    "lift": run_lift_study,
    "density": run_density_study,
    "nfunc": run_nfunc_stats,
}


def run_study(config: StudyConfig) -> ConvergenceReport:
    """Dispatch a study to its runner by config.kind."""
    runner = _RUNNERS[config.kind]
    report = runner(config)
    if report.inconclusive:
        raise InconclusiveStudyError(
            f"{config.kind} study did not reach its precision target; "
            "see the report for details", report=report)
    return report
