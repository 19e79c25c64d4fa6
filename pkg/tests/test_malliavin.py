"""Pathwise derivatives and covariance of the solution map."""

import numpy as np
import pytest

import oracles
from helpers import ramp_path, random_path
from roughwz import (ConfigurationError, SamplePath, TimeGrid,
                     covariance_samples, directional_derivative,
                     increment_gram, malliavin_covariance, model_preset,
                     nondegeneracy_report, sample_fbm, solve_driven)


def _zero_start_path(rng, grid, dim, scale=0.3):
    vals = np.vstack([np.zeros((1, dim)),
                      scale * np.cumsum(rng.normal(size=(len(grid.times) - 1,
                                                         dim)), axis=0)])
    return SamplePath(grid, vals)


# ---------------------------------------------------------------------------
# directional derivatives
# ---------------------------------------------------------------------------

def test_identity_model_first_derivative_is_the_direction():
    rng = np.random.default_rng(0)
    driver = random_path(rng, 12, 2)
    direction = _zero_start_path(rng, driver.grid, 2)
    deriv = directional_derivative(model_preset("identity", state_dim=2),
                                   driver, direction, order=2)
    assert np.max(np.abs(deriv.level(1) - direction.values)) < 1e-10
    assert np.max(np.abs(deriv.level(2))) < 1e-10
    assert deriv.values.shape == (2, 13, 2)
    with pytest.raises(ConfigurationError):
        deriv.level(3)


def test_ou_ramp_first_derivative_terminal_value():
    deriv = directional_derivative(model_preset("ou"), ramp_path(64),
                                   ramp_path(64))
    assert deriv.level(1)[-1, 0] == pytest.approx(oracles.XI1_OU_RAMP,
                                                  abs=1e-9)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(1)
    model = model_preset("bounded_trig")
    driver = random_path(rng, 16, 2, scale=0.25)
    direction = _zero_start_path(rng, driver.grid, 2)
    deriv = directional_derivative(model, driver, direction, order=3)

    def solve_at(c):
        bumped = SamplePath(driver.grid, driver.values + c * direction.values)
        return solve_driven(model, bumped).terminal_value()

    for order, eps in ((1, 1e-3), (2, 1e-3), (3, 5e-3)):
        fd = oracles.fd_directional(solve_at, order, eps)
        got = deriv.level(order)[-1]
        scale = max(1.0, float(np.max(np.abs(fd))))
        assert np.max(np.abs(got - fd)) / scale < 1e-4


@pytest.mark.parametrize("order", [1, 2])
def test_finite_difference_convergence_order(order):
    rng = np.random.default_rng(2)
    model = model_preset("bounded_trig")
    driver = random_path(rng, 16, 2, scale=0.25)
    direction = _zero_start_path(rng, driver.grid, 2)

    def solve_at(c):
        bumped = SamplePath(driver.grid, driver.values + c * direction.values)
        return solve_driven(model, bumped).terminal_value()

    eps_ladder = 0.2 * 0.5 ** np.arange(8)  # two decades of halving
    values = [oracles.fd_directional(solve_at, order, e) for e in eps_ladder]
    orders = oracles.richardson_orders(values)
    assert np.median(orders) >= 1.8


def test_first_derivative_is_linear_in_the_direction():
    rng = np.random.default_rng(3)
    model = model_preset("bounded_trig")
    driver = random_path(rng, 16, 2, scale=0.25)
    g = _zero_start_path(rng, driver.grid, 2)
    h = _zero_start_path(rng, driver.grid, 2)
    a, b = 0.7, -1.3
    mix = SamplePath(driver.grid, a * g.values + b * h.values)
    lhs = directional_derivative(model, driver, mix).level(1)
    rhs = (a * directional_derivative(model, driver, g).level(1)
           + b * directional_derivative(model, driver, h).level(1))
    scale = max(1.0, float(np.max(np.abs(rhs))))
    assert np.max(np.abs(lhs - rhs)) / scale < 1e-9


def test_direction_validation():
    rng = np.random.default_rng(4)
    model = model_preset("bounded_trig")
    driver = random_path(rng, 8, 2)
    bad_start = SamplePath.__new__(SamplePath)  # bypass the zero-start check
    bad_start.grid = driver.grid
    bad_start.values = driver.values + 1.0
    bad_start.hurst = None
    bad_start.meta = {}
    with pytest.raises(ConfigurationError):
        directional_derivative(model, driver, bad_start)
    with pytest.raises(ConfigurationError):
        directional_derivative(model, driver,
                               _zero_start_path(rng, TimeGrid.uniform(4), 2))
    with pytest.raises(ConfigurationError):
        directional_derivative(model, driver,
                               _zero_start_path(rng, driver.grid, 1))
    with pytest.raises(ConfigurationError):
        directional_derivative(model, driver,
                               _zero_start_path(rng, driver.grid, 2), order=0)


# ---------------------------------------------------------------------------
# covariance of the solution map
# ---------------------------------------------------------------------------

def test_covariance_identity_model_brownian():
    rng = np.random.default_rng(5)
    driver = sample_fbm(0.5, 32, 1, seed=7, dim=2)[0]
    cov = malliavin_covariance(model_preset("identity", state_dim=2), driver,
                               at_times=[0.5, 1.0])
    np.testing.assert_allclose(cov.matrices[0], 0.5 * np.eye(2), atol=1e-13)
    np.testing.assert_allclose(cov.matrices[1], 1.0 * np.eye(2), atol=1e-13)
    np.testing.assert_array_equal(cov.times, [0.5, 1.0])
    assert cov.min_eigenvalues() == pytest.approx([0.5, 1.0], abs=1e-12)
    assert cov.determinants() == pytest.approx([0.25, 1.0], rel=1e-10)


def test_covariance_identity_model_general_hurst():
    driver = sample_fbm(0.4, 32, 1, seed=8, dim=2)[0]
    cov = malliavin_covariance(model_preset("identity", state_dim=2), driver,
                               at_times=[0.5, 1.0])
    np.testing.assert_allclose(cov.matrices[0],
                               oracles.VAR_H04_T_HALF * np.eye(2), atol=1e-10)
    np.testing.assert_allclose(cov.matrices[1], np.eye(2), atol=1e-10)


def test_covariance_ou_terminal_variance():
    driver = sample_fbm(0.5, 64, 1, seed=9)[0]
    cov = malliavin_covariance(model_preset("ou"), driver)
    assert cov.matrices[0, 0, 0] == pytest.approx(oracles.OU_VAR_T1, abs=1e-3)


def test_covariance_constant_sigma_is_refinement_invariant():
    model = model_preset("scaled_identity", scale=0.8)
    mats = []
    for m in (16, 32):
        driver = sample_fbm(0.4, m, 1, seed=10)[0]
        mats.append(malliavin_covariance(model, driver,
                                         at_times=[0.5]).matrices[0])
    np.testing.assert_allclose(mats[0], mats[1], rtol=1e-12)
    want = 0.8 ** 2 * oracles.VAR_H04_T_HALF
    assert mats[0][0, 0] == pytest.approx(want, rel=1e-12)


def test_covariance_input_checks():
    model = model_preset("ou")
    driver = sample_fbm(0.5, 16, 1, seed=11)[0]
    with pytest.raises(ConfigurationError):
        malliavin_covariance(model, driver, at_times=[0.0])
    with pytest.raises(ConfigurationError):
        malliavin_covariance(model, driver,
                             gram=increment_gram(0.5, TimeGrid.uniform(8)))
    plain = SamplePath(driver.grid, driver.values)  # hurst stripped
    with pytest.raises(ConfigurationError):
        malliavin_covariance(model, plain)
    # an explicit gram substitutes for the missing hurst
    ok = malliavin_covariance(model, plain,
                              gram=increment_gram(0.5, driver.grid))
    assert ok.matrices.shape == (1, 1, 1)


def test_covariance_samples_match_per_path_calls():
    model = model_preset("bounded_trig")
    samples = covariance_samples(model, 0.5, 16, 3, seed=12)
    grid = TimeGrid.uniform(16)
    ensemble = sample_fbm(0.5, grid, 3, seed=12, dim=2)
    for i in range(3):
        single = malliavin_covariance(model, ensemble[i])
        assert np.max(np.abs(samples[i].matrices - single.matrices)) < 1e-9
    with pytest.raises(ConfigurationError):
        covariance_samples(model, 0.5, 16, 2, seed=12, t=0.0)


# ---------------------------------------------------------------------------
# nondegeneracy reporting
# ---------------------------------------------------------------------------

def test_report_on_identity_matrices():
    mats = np.broadcast_to(np.eye(2), (5, 2, 2)).copy()
    rep = nondegeneracy_report(mats)
    assert rep["count"] == 5 and rep["dim"] == 2
    for key in ("mean", "q05", "q50", "q95", "min"):
        assert rep["lambda_min"][key] == 1.0
    assert rep["determinant"]["mean"] == 1.0
    assert rep["determinant"]["stderr"] == 0.0
    assert rep["inverse_moments"] == {"1": 1.0, "2": 1.0}
    assert rep["floor_fraction"] == 0.0


def test_report_flags_a_singular_sample():
    mats = np.broadcast_to(np.eye(2), (10, 2, 2)).copy()
    mats[3] = np.diag([1.0, 0.0])
    rep = nondegeneracy_report(mats)
    assert rep["floor_fraction"] == pytest.approx(0.1)
    assert rep["lambda_min"]["min"] == 0.0
    assert rep["determinant"]["min"] == 0.0
    assert rep["inverse_moments"]["1"] > 1e10  # clipped at the floor


def test_report_on_sampled_ou_covariances():
    samples = covariance_samples(model_preset("ou"), 0.5, 64, 10, seed=13)
    rep = nondegeneracy_report(samples)
    band = 3.0 * rep["determinant"]["stderr"] + 1e-3
    assert abs(rep["determinant"]["mean"] - oracles.OU_VAR_T1) <= band
    assert rep["floor_fraction"] == 0.0


def test_report_input_validation():
    with pytest.raises(ConfigurationError):
        nondegeneracy_report([])
    with pytest.raises(ConfigurationError):
        nondegeneracy_report(np.zeros((3, 2, 1)))
