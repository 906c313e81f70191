"""Generative identities of the synthetic data machinery."""

import numpy as np
import pytest

from hfbayes.simulate import (
    SimSpec,
    residual_covariance,
    simulate_base_forecasts,
    simulate_dataset,
    simulate_panel,
)


def flat_spec(n, T, seed=0, loadings=None, idio=None, levels=None):
    ids = [f"s{i}" for i in range(n)]
    hier = {
        "atomic": ids,
        "levels": [{"name": "total", "labels": {s: "T" for s in ids}}],
        "factor_levels": ["total"],
    }
    return SimSpec(
        hierarchy_spec=hier,
        num_periods=T,
        loadings=np.ones((n, 1)) if loadings is None else loadings,
        factor_cov=np.eye(1),
        idio_var=np.ones(n) if idio is None else idio,
        rho=np.full(n + 1, 0.5),
        level_means=np.zeros(n) if levels is None else levels,
        seed=seed,
    )


def test_noiseless_panel_equals_state_path():
    spec = flat_spec(3, 20, loadings=np.zeros((3, 1)), idio=np.zeros(3),
                     levels=np.array([1.0, 2.0, 3.0]))
    values, states = simulate_panel(spec, np.random.default_rng(0))
    assert np.allclose(values, np.tile([1.0, 2.0, 3.0], (20, 1)))
    assert np.allclose(states[:, 0, :], values)


def test_common_factor_variance_aggregation():
    """Unit common factor over 1000 series with specific variance 99:
    the aggregate's variance is dominated by the factor while a single
    series barely notices it."""
    n, chunk, chunks = 1000, 10_000, 10
    totals = []
    singles = []
    for k in range(chunks):
        spec = flat_spec(n, chunk, seed=k, idio=np.full(n, 99.0))
        values, _ = simulate_panel(spec, np.random.default_rng(1000 + k))
        totals.append(values.sum(axis=1))
        singles.append(values[:, 0])
    var_total = np.concatenate(totals).var(ddof=1)
    var_single = np.concatenate(singles).var(ddof=1)
    assert abs(var_total - 1_099_000) < 0.02 * 1_099_000
    assert abs(var_single - 100.0) < 0.02 * 100.0


def test_base_forecast_edge_coefficients():
    rng = np.random.default_rng(1)
    r = rng.standard_normal((100, 2))
    g0 = simulate_base_forecasts(r, np.zeros(2), np.ones(2), rng)
    assert np.allclose(g0, 0.0)
    g1 = simulate_base_forecasts(r, np.ones(2), np.ones(2), rng)
    assert np.allclose(g1, r)


def test_base_forecast_moments_halfway():
    rng = np.random.default_rng(2)
    r = rng.standard_normal((1_000_000, 1))
    g = simulate_base_forecasts(r, np.array([0.5]), np.array([1.0]), rng)
    corr = np.corrcoef(g[:, 0], r[:, 0])[0, 1]
    assert abs(corr - 0.5) < 0.01
    assert abs(g.var(ddof=1) - 0.25) < 0.02 * 0.25


def test_variance_ratio_identity():
    rng = np.random.default_rng(3)
    for true_rho in (0.2, 0.5, 0.8):
        r = rng.standard_normal((1_000_000, 1)) * 1.7
        g = simulate_base_forecasts(r, np.array([true_rho]), np.array([1.7]), rng)
        ratio = g.var(ddof=1) / r.var(ddof=1)
        assert abs(ratio - true_rho**2) < 0.02 * true_rho**2


def test_cross_correlation_identity():
    """Forecast deviations inherit the residual correlation scaled by the
    two coefficients."""
    rng = np.random.default_rng(4)
    n = 2
    loadings = np.array([[1.0], [0.8]])
    idio = np.array([0.5, 0.7])
    cov = loadings @ loadings.T + np.diag(idio)
    L = np.linalg.cholesky(cov)
    r = rng.standard_normal((1_000_000, n)) @ L.T
    rho = np.array([0.6, 0.9])
    sd = np.sqrt(np.diag(cov))
    g = simulate_base_forecasts(r, rho, sd, rng)
    corr_r = np.corrcoef(r.T)[0, 1]
    corr_g = np.corrcoef(g.T)[0, 1]
    assert abs(corr_g - rho[0] * corr_r * rho[1]) < 0.02


def test_nan_rho_marks_missing_forecasts():
    rng = np.random.default_rng(5)
    r = rng.standard_normal((50, 2))
    g = simulate_base_forecasts(r, np.array([0.5, np.nan]), np.ones(2), rng)
    assert np.isnan(g[:, 1]).all()
    assert np.isfinite(g[:, 0]).all()


def test_rho_bounds_validated():
    with pytest.raises(ValueError, match="coefficients"):
        flat_spec(2, 10).__class__(
            hierarchy_spec=flat_spec(2, 10).hierarchy_spec,
            num_periods=10,
            loadings=np.ones((2, 1)),
            factor_cov=np.eye(1),
            idio_var=np.ones(2),
            rho=np.array([1.5, 0.2, 0.2]),
            level_means=np.zeros(2),
        )


def test_dataset_layout_and_store():
    spec = flat_spec(4, 30, seed=9)
    data = simulate_dataset(spec, horizon=6, first_origin=19)
    assert data.panel_values.shape == (30, 4)
    assert data.future_values.shape == (6, 4)
    assert data.insample_forecasts.shape == (30, 5)
    # store covers origins 19..34 with shrinking horizons near the end
    assert (19, 1) in data.store and (29, 6) in data.store
    assert (34, 1) in data.store and (34, 2) not in data.store
    assert all(vec.shape == (5,) for vec in data.store.values())


def test_dataset_deterministic_under_seed():
    spec = flat_spec(3, 25, seed=7)
    d1 = simulate_dataset(spec, horizon=4)
    d2 = simulate_dataset(spec, horizon=4)
    assert np.array_equal(d1.panel_values, d2.panel_values)
    assert np.array_equal(d1.insample_forecasts, d2.insample_forecasts)
    for key in d1.store:
        assert np.array_equal(d1.store[key], d2.store[key])


def test_residual_covariance_helper():
    spec = flat_spec(3, 10, idio=np.array([1.0, 2.0, 3.0]))
    cov = residual_covariance(spec)
    assert np.allclose(cov, np.ones((3, 3)) + np.diag([1.0, 2.0, 3.0]))
