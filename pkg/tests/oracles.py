"""Independent reference implementations used to cross-check the package.

Everything here recomputes results by a different route than the
library: per-segment polynomial quadrature instead of Chen telescoping,
exhaustive partition enumeration instead of dynamic programming,
finite-difference stencils instead of variational recursions, scipy's
ODE integrator instead of the in-package RK4, and hand Gaussian
calculus for densities.  A few constants computed from these routines
are frozen below so regressions surface as plain numeric diffs.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

# ---------------------------------------------------------------------------
# frozen constants (hand-derived, cross-checked against the oracles below)
# ---------------------------------------------------------------------------

# E[(w_{1/2} - w_0)(w_1 - w_{1/2})] at H = 0.4: 1/2 - (1/2)^{0.8}
GRAM_OFFDIAG_H04 = -0.0743491774985174
# first directional derivative of the OU solution along h_t = t at t = 1
XI1_OU_RAMP = 0.6321205588285577          # 1 - e^{-1}
# stationary-start OU variance at t = 1 (theta = 1, sigma = 1)
OU_VAR_T1 = 0.43233235838169365           # (1 - e^{-2}) / 2
# covariance of w_{1/2} at H = 0.4: (1/2)^{0.8}
VAR_H04_T_HALF = 0.5743491774985175


# ---------------------------------------------------------------------------
# iterated integrals of piecewise-linear paths, by segment quadrature
# ---------------------------------------------------------------------------

def pl_signature(increments: np.ndarray, level: int = 3) -> tuple:
    """Iterated integrals over the whole path, one segment at a time.

    On a segment with increment delta starting from running increment a,
    the integrands are polynomials in the segment parameter, so each
    update below is an exact integral:

        s3 += s2 (x) delta + a (x) delta (x) delta / 2 + delta^{(x)3} / 6
        s2 += a (x) delta + delta (x) delta / 2
        s1 += delta

    No Chen composition, no cumulative-sum telescoping.
    """
    inc = np.asarray(increments, dtype=float)
    d = inc.shape[1]
    s1 = np.zeros(d)
    s2 = np.zeros((d, d))
    s3 = np.zeros((d, d, d))
    for delta in inc:
        a = s1
        s3 = (s3 + np.einsum("ab,c->abc", s2, delta)
              + np.einsum("a,b,c->abc", a, delta, delta) / 2.0
              + np.einsum("a,b,c->abc", delta, delta, delta) / 6.0)
        s2 = s2 + np.einsum("a,b->ab", a, delta) + np.outer(delta, delta) / 2.0
        s1 = a + delta
    return (s1, s2, s3)[:level]


def pl_running_signature(increments: np.ndarray, level: int = 3) -> tuple:
    """pl_signature recorded at every node: arrays (N+1, d), (N+1, d, d), ..."""
    inc = np.asarray(increments, dtype=float)
    n, d = inc.shape
    r1 = np.zeros((n + 1, d))
    r2 = np.zeros((n + 1, d, d))
    r3 = np.zeros((n + 1, d, d, d))
    for j in range(n):
        delta = inc[j]
        a = r1[j]
        r3[j + 1] = (r3[j] + np.einsum("ab,c->abc", r2[j], delta)
                     + np.einsum("a,b,c->abc", a, delta, delta) / 2.0
                     + np.einsum("a,b,c->abc", delta, delta, delta) / 6.0)
        r2[j + 1] = r2[j] + np.outer(a, delta) + np.outer(delta, delta) / 2.0
        r1[j + 1] = a + delta
    return (r1, r2, r3)[:level]


def interval_signature(increments: np.ndarray, i: int, j: int,
                       level: int = 3) -> tuple:
    """Iterated integrals over [t_i, t_j]: quadrature on segments i..j-1."""
    return pl_signature(np.asarray(increments)[i:j], level)


def hs_norm(tensor) -> float:
    return float(np.sqrt(np.sum(np.asarray(tensor, dtype=float) ** 2)))


def levy_area(increments: np.ndarray) -> np.ndarray:
    """Antisymmetric part of the level-2 integral, by quadrature."""
    s2 = pl_signature(increments, 2)[1]
    return 0.5 * (s2 - s2.T)


# ---------------------------------------------------------------------------
# p-variation by exhaustive partition enumeration
# ---------------------------------------------------------------------------

def level_cost_matrix(increments: np.ndarray, k: int, q: float) -> np.ndarray:
    """costs[i, j] = |x^k over [t_i, t_j]|^q from quadrature tensors."""
    inc = np.asarray(increments, dtype=float)
    n = inc.shape[0]
    costs = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for j in range(i + 1, n + 1):
            costs[i, j] = hs_norm(interval_signature(inc, i, j, k)[k - 1]) ** q
    return costs


def enumerate_best_partition(costs: np.ndarray, i0: int, i1: int) -> float:
    """max over node chains i0 = c_0 < ... < c_r = i1 of the summed costs."""
    best = 0.0
    interior = range(i0 + 1, i1)
    for r in range(i1 - i0):
        for subset in combinations(interior, r):
            chain = (i0,) + subset + (i1,)
            total = sum(costs[chain[q], chain[q + 1]]
                        for q in range(len(chain) - 1))
            best = max(best, total)
    return best


def pvar_seminorm_enumerate(increments: np.ndarray, k: int, p: float,
                            i0: int = 0, i1: int | None = None) -> float:
    """||x^k||_{p/k-var} over window nodes, fully by brute force."""
    inc = np.asarray(increments, dtype=float)
    if i1 is None:
        i1 = inc.shape[0]
    costs = level_cost_matrix(inc, k, p / k)
    return enumerate_best_partition(costs, i0, i1) ** (k / p)


def control_enumerate(increments: np.ndarray, p: float, used_levels: int,
                      i0: int = 0, i1: int | None = None) -> float:
    """omega(t_i0, t_i1) = sum over levels of the best-partition sums."""
    inc = np.asarray(increments, dtype=float)
    if i1 is None:
        i1 = inc.shape[0]
    total = 0.0
    for k in range(1, used_levels + 1):
        costs = level_cost_matrix(inc, k, p / k)
        total += enumerate_best_partition(costs, i0, i1)
    return total


def nfunc_greedy(omega, n_segments: int, times, beta: float):
    """Greedy block scan against a window-control callable omega(i, j).

    tau_0 = node 0; each block ends at the first node j with
    omega(a, j) >= beta; a block ending at the last node is recorded
    but only blocks ending strictly before t = 1 are counted.
    """
    breaks = []
    a = 0
    n = n_segments
    while a < n:
        hit = None
        for j in range(a + 1, n + 1):
            if omega(a, j) >= beta:
                hit = j
                break
        if hit is None:
            break
        breaks.append(hit)
        if hit == n:
            break
        a = hit
    count = sum(1 for b in breaks if times[b] < 1.0)
    return count, [float(times[b]) for b in breaks]


def nfunc_enumerate(increments: np.ndarray, times, p: float, beta: float,
                    used_levels: int):
    """Greedy block count with the control recomputed by enumeration."""
    inc = np.asarray(increments, dtype=float)

    def omega(i, j):
        return control_enumerate(inc, p, used_levels, i, j)

    return nfunc_greedy(omega, inc.shape[0], times, beta)


# ---------------------------------------------------------------------------
# finite differences of the solve map
# ---------------------------------------------------------------------------

def fd_directional(solve, order: int, eps: float) -> np.ndarray:
    """Central difference of order 1..3 of eps -> solve(eps).

    ``solve(c)`` must return the solution array for the driver w + c*h.
    All three stencils have O(eps^2) truncation error.
    """
    if order == 1:
        return (solve(eps) - solve(-eps)) / (2.0 * eps)
    if order == 2:
        return (solve(eps) - 2.0 * solve(0.0) + solve(-eps)) / eps ** 2
    if order == 3:
        return (solve(2.0 * eps) - 2.0 * solve(eps) + 2.0 * solve(-eps)
                - solve(-2.0 * eps)) / (2.0 * eps ** 3)
    raise ValueError(f"no stencil for order {order}")


def richardson_orders(values: list) -> list:
    """Observed convergence orders from results at eps, eps/2, eps/4, ...

    order_i = log2(|D_i - D_{i+1}| / |D_{i+1} - D_{i+2}|); for an
    O(eps^2) stencil these should sit near 2.
    """
    diffs = [float(np.max(np.abs(values[i] - values[i + 1])))
             for i in range(len(values) - 1)]
    return [math.log2(diffs[i] / diffs[i + 1])
            for i in range(len(diffs) - 1)]


# ---------------------------------------------------------------------------
# Gaussian closed forms
# ---------------------------------------------------------------------------

def normal_pdf(x, var: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.exp(-x * x / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def mvn_pdf(points: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float)) - np.asarray(mean)
    e = pts.shape[1]
    inv = np.linalg.inv(cov)
    det = np.linalg.det(cov)
    quad = np.einsum("ni,ij,nj->n", pts, inv, pts)
    return np.exp(-0.5 * quad) / math.sqrt((2.0 * math.pi) ** e * det)


def ou_variance(t: float, theta: float = 1.0, sigma: float = 1.0) -> float:
    return sigma ** 2 * (1.0 - math.exp(-2.0 * theta * t)) / (2.0 * theta)


def gaussian_bias_curve(t: float, rho: float, xi) -> np.ndarray:
    """|N(0, t + rho^2) - N(0, t)| densities on a 1-d grid."""
    return np.abs(normal_pdf(xi, t + rho * rho) - normal_pdf(xi, t))


def simpson_integral(values: np.ndarray, step: float) -> float:
    """Composite Simpson on a uniform grid with an even interval count."""
    n = values.size
    if n % 2 == 0:
        raise ValueError("Simpson needs an odd number of points")
    weights = np.ones(n)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return float(np.sum(weights * values) * step / 3.0)


# ---------------------------------------------------------------------------
# fractional Brownian covariance
# ---------------------------------------------------------------------------

def fbm_cov(h: float, s: float, t: float) -> float:
    return 0.5 * (s ** (2 * h) + t ** (2 * h) - abs(t - s) ** (2 * h))


def increment_cov(h: float, a: float, b: float, c: float, d: float) -> float:
    """E[(w_b - w_a)(w_d - w_c)] from the covariance function."""
    return (fbm_cov(h, b, d) - fbm_cov(h, b, c)
            - fbm_cov(h, a, d) + fbm_cov(h, a, c))


def sample_cov_se(gram: np.ndarray, n_samples: int) -> np.ndarray:
    """Standard error of each known-mean sample-covariance entry.

    For centered Gaussians, Var(hat g_ij) = (g_ii g_jj + g_ij^2) / n.
    """
    diag = np.diag(gram)
    return np.sqrt((np.outer(diag, diag) + gram ** 2) / n_samples)


# ---------------------------------------------------------------------------
# affine flows via scipy's integrator (independent of the in-package RK4)
# ---------------------------------------------------------------------------

def affine_ramp_terminal(a_mat: np.ndarray, sigma: np.ndarray, c: np.ndarray,
                         slope: np.ndarray, t: float = 1.0) -> np.ndarray:
    """y_t for dy = (A y + c) dt + sigma dw with w = slope * time, y_0 = 0."""
    from scipy.integrate import solve_ivp
    a_mat = np.asarray(a_mat, dtype=float)
    forcing = np.asarray(sigma, dtype=float) @ np.asarray(slope, dtype=float) \
        + np.asarray(c, dtype=float)
    sol = solve_ivp(lambda _t, y: a_mat @ y + forcing,
                    (0.0, t), np.zeros(a_mat.shape[0]),
                    rtol=1e-12, atol=1e-14, dense_output=False)
    return sol.y[:, -1]


def affine_moments_ode(a_mat: np.ndarray, sigma: np.ndarray, c: np.ndarray,
                       t: float) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance of the H = 1/2 affine solution at time t.

    Integrates m' = A m + c and P' = A P + P A^T + sigma sigma^T with
    scipy, starting from zero.
    """
    from scipy.integrate import solve_ivp
    a_mat = np.asarray(a_mat, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    c = np.asarray(c, dtype=float)
    e = a_mat.shape[0]
    ssq = sigma @ sigma.T

    def rhs(_t, z):
        m = z[:e]
        p = z[e:].reshape(e, e)
        dm = a_mat @ m + c
        dp = a_mat @ p + p @ a_mat.T + ssq
        return np.concatenate([dm, dp.ravel()])

    sol = solve_ivp(rhs, (0.0, t), np.zeros(e + e * e),
                    rtol=1e-12, atol=1e-14)
    z = sol.y[:, -1]
    return z[:e], z[e:].reshape(e, e)
