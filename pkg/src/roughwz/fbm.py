"""Fractional Brownian motion on [0, 1]: exact sampling and covariance tools.

A d-dimensional fractional Brownian motion (fBM) with Hurst parameter H
has independent components, each a mean-zero Gaussian process with

    E[w_s w_t] = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2.

Sampling on uniform grids goes through circulant embedding of the
fractional Gaussian noise autocovariance (Davies-Harte), which is exact
in distribution and O(N log N) per path.  Non-uniform grids, or the
rare embedding failure, fall back to a dense Cholesky factorization of
the increment covariance with a single jitter retry.

Each path draws from its own counter-based random stream derived from
``(seed, path_index)``, so ensembles are reproducible and independent
of evaluation order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterator, Literal, Sequence

import numpy as np

from .errors import ConfigurationError, EmbeddingError, RefinementError
from .rngs import stream, substream_state

__all__ = [
    "validate_hurst",
    "require_lift_regime",
    "TimeGrid",
    "SamplePath",
    "PathEnsemble",
    "IncrementGram",
    "fbm_covariance",
    "increment_gram",
    "sample_fbm",
    "restrict_to_partition",
    "interpolate_to",
    "paths_to_csv",
    "gram_to_csv",
]

_NODE_TOL = 1e-12


def validate_hurst(h: float) -> float:
    """Check 0 < H < 1 (sampling regime) and return H as a float."""
    h = float(h)
    if not 0.0 < h < 1.0:
        raise ConfigurationError(f"Hurst parameter must lie in (0, 1), got {h}")
    return h


def require_lift_regime(h: float) -> float:
    """Check 1/4 < H <= 1/2, the standing assumption for level-3 lift work."""
    h = validate_hurst(h)
    if not 0.25 < h <= 0.5:
        raise ConfigurationError(
            f"rough-path lift machinery requires 1/4 < H <= 1/2, got {h}"
        )
    return h


# ---------------------------------------------------------------------------
# grids and paths
# ---------------------------------------------------------------------------

class TimeGrid:
    """Strictly increasing partition of [0, 1] with t_0 = 0 and t_N = 1."""

    def __init__(self, times: Sequence[float]):
        t = np.asarray(times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ConfigurationError("a time grid needs at least the two endpoints")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ConfigurationError("time grids must span exactly [0, 1]")
        if not np.all(np.diff(t) > 0):
            raise ConfigurationError("time grid nodes must be strictly increasing")
        self.times = t
        self.times.setflags(write=False)

    @classmethod
    def uniform(cls, m: int) -> "TimeGrid":
        m = int(m)
        if m < 1:
            raise ConfigurationError(f"uniform grid needs at least 1 segment, got {m}")
        return cls(np.arange(m + 1) / m)

    @property
    def n_segments(self) -> int:
        return self.times.size - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (within 1e-12), else raise."""
        i = int(np.searchsorted(self.times, t))
        for j in (i - 1, i, i + 1):
            if 0 <= j < self.times.size and abs(self.times[j] - t) <= _NODE_TOL:
                return j
        raise ConfigurationError(f"t={t} is not a node of this grid")

    def indices_in(self, fine: "TimeGrid") -> np.ndarray:
        """Positions of this grid's nodes inside ``fine``; raise if any is missing."""
        pos = np.searchsorted(fine.times, self.times)
        pos = np.clip(pos, 0, fine.times.size - 1)
        left = np.clip(pos - 1, 0, fine.times.size - 1)
        use_left = np.abs(fine.times[left] - self.times) < np.abs(fine.times[pos] - self.times)
        pos = np.where(use_left, left, pos)
        if np.any(np.abs(fine.times[pos] - self.times) > _NODE_TOL):
            raise RefinementError("grid nodes are not a subset of the fine grid")
        return pos

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __hash__(self) -> int:  # grids are effectively immutable
        return hash(self.times.tobytes())

    def __repr__(self) -> str:
        return f"TimeGrid(N={self.n_segments})"


@dataclass
class SamplePath:
    """One driver realization: node values of a path started at 0.

    ``values`` has shape (N+1, d) and row 0 must be zero; between nodes
    the path is understood as its piecewise-linear interpolant.
    """

    grid: TimeGrid
    values: np.ndarray
    hurst: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.times.size:
            raise ConfigurationError(
                f"values have {v.shape[0]} rows for a grid with "
                f"{self.grid.times.size} nodes"
            )
        if np.any(v[0] != 0.0):
            raise ConfigurationError("sample paths must start at the origin")
        self.values = v

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)


class PathEnsemble:
    """A stack of sample paths on a common grid.

    Behaves as a sequence of :class:`SamplePath` while keeping the
    underlying (count, N+1, d) array exposed for vectorized consumers.
    """

    def __init__(self, grid: TimeGrid, values: np.ndarray, hurst: float | None = None,
                 meta: dict | None = None):
        values = np.asarray(values, dtype=float)
        if values.ndim != 3 or values.shape[1] != grid.times.size:
            raise ConfigurationError("ensemble values must have shape (count, N+1, d)")
        self.grid = grid
        self.values = values
        self.hurst = hurst
        self.meta = meta or {}

    def __len__(self) -> int:
        return self.values.shape[0]

    def __getitem__(self, i: int) -> SamplePath:
        return SamplePath(self.grid, self.values[i], hurst=self.hurst,
                          meta={**self.meta, "path_index": int(i)})

    def __iter__(self) -> Iterator[SamplePath]:
        for i in range(len(self)):
            yield self[i]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


# ---------------------------------------------------------------------------
# covariance structure
# ---------------------------------------------------------------------------

def fbm_covariance(h: float, s: float, t: float) -> float:
    """Covariance E[w_s w_t] of scalar fBM with Hurst parameter ``h``."""
    h = validate_hurst(h)
    s, t = float(s), float(t)
    if s < 0 or t < 0:
        raise ConfigurationError("fBM covariance is defined for s, t >= 0")
    return 0.5 * (t ** (2 * h) + s ** (2 * h) - abs(t - s) ** (2 * h))


@dataclass
class IncrementGram:
    """Gram matrix of grid increments of one fBM component.

    Entry (j, k) is E[(w_{t_j} - w_{t_{j-1}})(w_{t_k} - w_{t_{k-1}})],
    expanded bilinearly from the node covariance.  Symmetric; Toeplitz
    on uniform grids; PSD up to factorization jitter.
    """

    hurst: float
    grid: TimeGrid
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        n = self.grid.n_segments
        if m.shape != (n, n):
            raise ConfigurationError("gram matrix shape does not match the grid")
        if not np.array_equal(m, m.T):
            raise ConfigurationError("gram matrix must be exactly symmetric")
        self.matrix = m


def increment_gram(h: float, grid: TimeGrid) -> IncrementGram:
    """Increment Gram matrix for one component of fBM on ``grid``."""
    h = validate_hurst(h)
    t = grid.times
    # R(t_j, t_k) - R(t_j, t_{k-1}) - R(t_{j-1}, t_k) + R(t_{j-1}, t_{k-1})
    r = 0.5 * (t[:, None] ** (2 * h) + t[None, :] ** (2 * h)
               - np.abs(t[:, None] - t[None, :]) ** (2 * h))
    g = r[1:, 1:] - r[1:, :-1] - r[:-1, 1:] + r[:-1, :-1]
    g = 0.5 * (g + g.T)  # kill asymmetric roundoff exactly
    return IncrementGram(h, grid, g)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def _fgn_autocovariance(h: float, n: int, dt: float) -> np.ndarray:
    k = np.arange(n + 1, dtype=float)
    gamma = 0.5 * ((k + 1) ** (2 * h) - 2 * k ** (2 * h) + np.abs(k - 1) ** (2 * h))
    return dt ** (2 * h) * gamma


def _circulant_eigenvalues(h: float, n: int, dt: float) -> np.ndarray:
    gamma = _fgn_autocovariance(h, n, dt)
    row = np.concatenate([gamma, gamma[-2:0:-1]])  # length 2n
    lam = np.fft.fft(row).real
    if lam.min() < -1e-8 * max(lam.max(), 1e-30):
        raise EmbeddingError(
            f"circulant embedding produced negative eigenvalues (H={h}, N={n})"
        )
    return np.clip(lam, 0.0, None)


def _fgn_from_embedding(lam: np.ndarray, normals: np.ndarray) -> np.ndarray:
    """Exact fGn synthesis from circulant eigenvalues.

    ``normals`` carries 2n i.i.d. standard normals per leading row; the
    Hermitian frequency vector built from them is transformed back with
    one FFT, whose real part has exactly the Toeplitz target covariance.
    """
    two_n = lam.size
    n = two_n // 2
    z = normals
    v = np.zeros(z.shape[:-1] + (two_n,), dtype=complex)
    v[..., 0] = np.sqrt(lam[0]) * z[..., 0]
    v[..., n] = np.sqrt(lam[n]) * z[..., n]
    half = np.sqrt(0.5 * lam[1:n])
    v[..., 1:n] = half * (z[..., 1:n] + 1j * z[..., n + 1:])
    v[..., n + 1:] = np.conj(v[..., 1:n])[..., ::-1]
    return np.fft.fft(v, axis=-1).real[..., :n] / np.sqrt(two_n)


def _cholesky_factor(h: float, grid: TimeGrid) -> np.ndarray:
    g = increment_gram(h, grid).matrix
    try:
        return np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        jitter = 1e-12 * np.trace(g)
        try:
            return np.linalg.cholesky(g + jitter * np.eye(g.shape[0]))
        except np.linalg.LinAlgError:
            raise ConfigurationError(
                f"increment covariance is not PSD even after jitter (H={h}, "
                f"N={grid.n_segments})"
            ) from None


def sample_fbm(h: float, grid: TimeGrid | int, count: int, seed: int, dim: int = 1,
               method: Literal["auto", "circulant", "cholesky"] = "auto",
               first_index: int = 0) -> PathEnsemble:
    """Sample ``count`` independent d-dimensional fBM paths on ``grid``.

    ``grid`` may be a :class:`TimeGrid` or an integer (uniform grid with
    that many segments).  Path ``i`` consumes only its own substream
    ``(seed, first_index + i)``, so subsets of an ensemble are
    reproducible and large ensembles can be generated chunk by chunk.
    """
    h = validate_hurst(h)
    if isinstance(grid, int):
        grid = TimeGrid.uniform(grid)
    count, dim = int(count), int(dim)
    if count < 1 or dim < 1:
        raise ConfigurationError("count and dim must be positive")

    n = grid.n_segments
    dt = grid.dt
    uniform = np.allclose(dt, dt[0], rtol=0, atol=_NODE_TOL)

    lam = None
    chol = None
    if method not in ("auto", "circulant", "cholesky"):
        raise ConfigurationError(f"unknown sampling method {method!r}")
    if method in ("auto", "circulant"):
        if uniform:
            try:
                lam = _circulant_eigenvalues(h, n, float(dt[0]))
            except EmbeddingError:
                if method == "circulant":
                    raise
        elif method == "circulant":
            raise ConfigurationError("circulant sampling requires a uniform grid")
    if lam is None:
        chol = _cholesky_factor(h, grid)

    values = np.empty((count, n + 1, dim))
    values[:, 0, :] = 0.0
    draws = 2 * n if lam is not None else n
    batch = 4096  # vectorize the FFT / matmul while keeping per-path streams
    for start in range(0, count, batch):
        stop = min(start + batch, count)
        z = np.empty((stop - start, dim, draws))
        for i in range(start, stop):
            z[i - start] = stream(seed, first_index + i).standard_normal((dim, draws))
        if lam is not None:
            fgn = _fgn_from_embedding(lam, z)
        else:
            fgn = z @ chol.T
        np.cumsum(np.swapaxes(fgn, 1, 2), axis=1, out=values[start:stop, 1:, :])

    meta = {"method": "circulant" if lam is not None else "cholesky",
            **substream_state(seed)}
    return PathEnsemble(grid, values, hurst=h, meta=meta)


# ---------------------------------------------------------------------------
# refinement and interpolation
# ---------------------------------------------------------------------------

def restrict_to_partition(path: SamplePath, coarse: TimeGrid) -> SamplePath:
    """Node values of ``path`` on a sub-grid of its grid."""
    idx = coarse.indices_in(path.grid)
    return SamplePath(coarse, path.values[idx], hurst=path.hurst, meta=dict(path.meta))


def interpolate_to(path: SamplePath, fine: TimeGrid) -> SamplePath:
    """Evaluate the piecewise-linear interpolant of ``path`` on ``fine``.

    Exact at shared nodes; used to re-express a coarse driver on a fine
    grid so that two solves report on common nodes.
    """
    out = np.empty((fine.times.size, path.dim))
    for c in range(path.dim):
        out[:, c] = np.interp(fine.times, path.grid.times, path.values[:, c])
    out[0] = 0.0
    return SamplePath(fine, out, hurst=path.hurst, meta=dict(path.meta))


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def paths_to_csv(paths: PathEnsemble | SamplePath, file) -> None:
    """Write node values as CSV rows (path_id, t, w_1, ..., w_d)."""
    if isinstance(paths, SamplePath):
        paths = PathEnsemble(paths.grid, paths.values[None, ...], hurst=paths.hurst)
    w = csv.writer(file)
    w.writerow(["path_id", "t"] + [f"w_{c + 1}" for c in range(paths.dim)])
    for i in range(len(paths)):
        for j, t in enumerate(paths.grid.times):
            w.writerow([i, repr(float(t))] + [repr(float(x)) for x in paths.values[i, j]])


def gram_to_csv(gram: IncrementGram, file) -> None:
    """Write the increment Gram matrix as CSV (one row per increment)."""
    w = csv.writer(file)
    w.writerow([f"g_{k + 1}" for k in range(gram.matrix.shape[1])])
    for row in gram.matrix:
        w.writerow([repr(float(x)) for x in row])
