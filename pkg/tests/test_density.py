"""Mollified density estimation and its closed-form references."""

import io
import json

import numpy as np
import pytest

import oracles
from roughwz import (ConfigurationError, OracleUnavailableError,
                     affine_gaussian_moments, bandwidth, default_delta,
                     estimate_density, gaussian_kernel, model_preset,
                     reference_density, sup_error)
from roughwz.density import density_to_csv, simulate_terminal_states


# ---------------------------------------------------------------------------
# kernel and bandwidth rules
# ---------------------------------------------------------------------------

def test_kernel_peak_values():
    for e in (1, 2, 3):
        peak = gaussian_kernel(np.zeros((1, e)), 0.3)[0]
        assert peak == pytest.approx((2 * np.pi * 0.09) ** (-0.5 * e),
                                     rel=1e-14)


def test_kernel_far_tail_flushes_to_exact_zero():
    rho = 0.1
    far = np.array([[rho * np.sqrt(80.0) * 1.01]])
    assert gaussian_kernel(far, rho)[0] == 0.0
    near = np.array([[rho * np.sqrt(80.0) * 0.99]])
    assert gaussian_kernel(near, rho)[0] > 0.0


def test_kernel_normalizes_to_one():
    x = np.arange(-1.0, 1.0 + 1e-9, 1e-3)
    vals = gaussian_kernel(x[:, None], 0.1)
    assert oracles.simpson_integral(vals, 1e-3) == pytest.approx(1.0, abs=1e-8)


def test_kernel_rejects_bad_bandwidth():
    with pytest.raises(ConfigurationError):
        gaussian_kernel(np.zeros((1, 1)), 0.0)


def test_bandwidth_and_default_exponent():
    assert bandwidth(16, 0.5) == 0.25
    assert default_delta(0.4) == pytest.approx(0.3)
    assert default_delta(0.5) == pytest.approx(0.5)
    with pytest.raises(ConfigurationError):
        bandwidth(16, 0.0)
    with pytest.raises(ConfigurationError):
        default_delta(0.25)  # exponent would be zero


# ---------------------------------------------------------------------------
# estimator against exactly known laws
# ---------------------------------------------------------------------------

def test_estimator_matches_smoothed_gaussian_pointwise():
    # identity model at H = 1/2: y(1) = w(1) ~ N(0, 1) at every m, so the
    # estimator's expectation is exactly N(0, 1 + rho^2)
    model = model_preset("identity")
    pts = np.linspace(-3.0, 3.0, 13)[:, None]
    est = estimate_density(model, 0.5, 64, 20000, seed=5, points=pts)
    want = oracles.normal_pdf(pts[:, 0], 1.0 + est.rho ** 2)
    assert np.all(np.abs(est.values - want) <= 5.0 * est.stderr + 1e-12)
    assert est.rho == pytest.approx(64 ** -0.5)


def test_estimator_standard_errors_halve_with_four_times_the_samples():
    model = model_preset("identity")
    pts = np.linspace(-2.0, 2.0, 9)[:, None]
    small = estimate_density(model, 0.5, 16, 4000, seed=6, points=pts)
    large = estimate_density(model, 0.5, 16, 16000, seed=6, points=pts)
    ratio = np.median(large.stderr / small.stderr)
    assert 0.45 <= ratio <= 0.55


def test_estimator_is_deterministic_and_chunk_stable():
    model = model_preset("identity")
    pts = np.linspace(-1.0, 1.0, 5)[:, None]
    a = estimate_density(model, 0.5, 8, 300, seed=7, points=pts)
    b = estimate_density(model, 0.5, 8, 300, seed=7, points=pts)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.stderr, b.stderr)
    c = estimate_density(model, 0.5, 8, 300, seed=7, points=pts, chunk=37)
    np.testing.assert_allclose(a.values, c.values, rtol=1e-12)


def test_estimator_nonnegative_with_unit_mass():
    est = estimate_density(model_preset("identity"), 0.5, 16, 4000, seed=8,
                           axis_points=161)
    assert np.all(est.values >= 0.0)
    assert np.all(est.stderr >= 0.0)
    assert est.mass_check() == pytest.approx(1.0, abs=0.02)
    assert est.tail_fraction < 0.005


def test_estimator_bias_tracks_the_bandwidth():
    # peaks drift up toward (2 pi)^(-1/2) as rho = m^(-1/2) shrinks
    model = model_preset("identity")
    pts = np.array([[0.0]])
    peaks = []
    for m in (4, 16, 64):
        est = estimate_density(model, 0.5, m, 8000, seed=9, points=pts)
        want = float(oracles.normal_pdf(0.0, 1.0 + est.rho ** 2))
        assert abs(est.values[0] - want) <= 5.0 * est.stderr[0]
        peaks.append(want)
    assert peaks[0] < peaks[1] < peaks[2] < (2 * np.pi) ** -0.5


def test_estimator_grid_handling_across_dimensions():
    est2 = estimate_density(model_preset("identity", state_dim=2), 0.5, 8,
                            2000, seed=10, axis_points=21)
    assert est2.grid_shape() == (21, 21)
    assert est2.points.shape == (441, 2)
    assert np.linalg.norm(est2.argmax_point()) < 1.0
    pts3 = np.zeros((1, 3))
    est3 = estimate_density(model_preset("identity", state_dim=3), 0.5, 8,
                            4000, seed=11, points=pts3)
    want = (2 * np.pi * (1 + est3.rho ** 2)) ** -1.5
    assert abs(est3.values[0] - want) <= 5.0 * est3.stderr[0]
    with pytest.raises(ConfigurationError):
        estimate_density(model_preset("identity", state_dim=2), 0.5, 8, 100,
                         seed=12, points=np.zeros((1, 3)))


def test_simulated_terminals_are_chunk_independent():
    model = model_preset("identity")
    a = simulate_terminal_states(model, 0.5, 8, 200, seed=13)
    b = simulate_terminal_states(model, 0.5, 8, 200, seed=13, chunk=17)
    np.testing.assert_array_equal(a, b)
    shifted = simulate_terminal_states(model, 0.5, 8, 100, seed=13,
                                       first_index=100)
    np.testing.assert_array_equal(shifted, a[100:])


# ---------------------------------------------------------------------------
# closed-form references
# ---------------------------------------------------------------------------

def test_reference_density_ou_peak():
    peak = reference_density(model_preset("ou"), 0.5, 1.0, np.array([[0.0]]))
    assert peak[0] == pytest.approx((2 * np.pi * oracles.OU_VAR_T1) ** -0.5,
                                    rel=1e-12)


def test_reference_density_concentrates_as_t_vanishes():
    val = reference_density(model_preset("ou"), 0.5, 1e-4, np.array([[1.0]]))
    assert val[0] < 1e-10


def test_reference_density_unavailable_cases():
    with pytest.raises(OracleUnavailableError):
        reference_density(model_preset("bounded_trig"), 0.5, 1.0,
                          np.zeros((1, 2)))
    with pytest.raises(OracleUnavailableError):
        reference_density(model_preset("ou"), 0.4, 1.0, np.zeros((1, 1)))
    degenerate = model_preset("affine", sigma=[[0.0]])
    with pytest.raises(OracleUnavailableError):
        reference_density(degenerate, 0.5, 1.0, np.zeros((1, 1)))


def test_affine_moments_match_ivp_oracle():
    mean, cov = affine_gaussian_moments(model_preset("ou"), 1.0)
    assert mean[0] == pytest.approx(0.0, abs=1e-14)
    assert cov[0, 0] == pytest.approx(oracles.OU_VAR_T1, rel=1e-12)

    a_mat = np.array([[-0.5, 0.3], [-0.2, -0.8]])
    sigma = np.array([[1.0, 0.1], [0.0, 0.7]])
    c = np.array([0.2, -0.1])
    model = model_preset("affine", sigma=sigma.tolist(), a=a_mat.tolist(),
                         c=c.tolist())
    mean, cov = affine_gaussian_moments(model, 0.7)
    want_mean, want_cov = oracles.affine_moments_ode(a_mat, sigma, c, 0.7)
    np.testing.assert_allclose(mean, want_mean, atol=1e-10)
    np.testing.assert_allclose(cov, want_cov, atol=1e-10)


def test_smoothed_reference_equals_widened_gaussian():
    pts = np.linspace(-2.0, 2.0, 9)
    got = reference_density(model_preset("identity"), 0.5, 1.0, pts[:, None],
                            smoothing_rho=0.25)
    want = oracles.normal_pdf(pts, 1.0 + 0.25 ** 2)
    np.testing.assert_allclose(got, want, rtol=1e-13)


def test_sup_error_basics():
    x = np.linspace(0.0, 1.0, 11)
    assert sup_error(x, x) == 0.0
    assert sup_error(x + 0.125, x) == pytest.approx(0.125)
    with pytest.raises(ConfigurationError):
        sup_error(x, x[:-1])


def test_density_csv_and_meta_sidecar():
    est = estimate_density(model_preset("identity"), 0.5, 8, 200, seed=14,
                           points=np.linspace(-1, 1, 4)[:, None])
    buf, meta = io.StringIO(), io.StringIO()
    density_to_csv(est, buf, meta)
    lines = buf.getvalue().strip().splitlines()
    assert lines[0] == "xi_1,value,stderr"
    assert len(lines) == 5
    doc = json.loads(meta.getvalue())
    assert doc["model"] == "identity" and doc["m"] == 8
    assert doc["count"] == 200 and doc["seed"] == 14
    assert doc["rho"] == pytest.approx(8 ** -0.5)
    assert doc["grid_shape"] == [4]
