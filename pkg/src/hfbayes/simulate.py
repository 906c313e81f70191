"""Synthetic data generation matching the model's own assumptions.

Panels come from shared state dynamics plus factor-structured residuals;
base forecasts are drawn from the calibration generative equation
g = rho^2 r + rho sqrt(1 - rho^2) sigma_r z, so fitted coefficients are
directly comparable to the simulation truth.
"""

from dataclasses import dataclass, field

import numpy as np

from .dlm import build_dlm_spec
from .hierarchy import build_hierarchy, summing_matrix


@dataclass
class SimSpec:
    """Truth configuration for a synthetic dataset."""

    hierarchy_spec: dict
    num_periods: int
    loadings: np.ndarray        # (n, q*) raw-unit loadings
    factor_cov: np.ndarray      # (q*, q*)
    idio_var: np.ndarray        # (n,) specific variances, > 0
    rho: np.ndarray             # (m,) per-node coefficients; NaN = no forecast
    level_means: np.ndarray     # (n,) initial level per series
    seasonal_period: int = 0
    seasonal_amplitude: float = 0.0
    state_noise_sd: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.loadings = np.atleast_2d(np.asarray(self.loadings, float))
        self.factor_cov = np.atleast_2d(np.asarray(self.factor_cov, float))
        self.idio_var = np.asarray(self.idio_var, float)
        self.rho = np.asarray(self.rho, float)
        self.level_means = np.asarray(self.level_means, float)
        if np.any(self.idio_var < 0):
            raise ValueError("specific variances must be non-negative")
        finite = self.rho[np.isfinite(self.rho)]
        if np.any((finite < 0) | (finite > 1)):
            raise ValueError("true coefficients must lie in [0, 1]")


def residual_covariance(spec):
    """Raw-unit residual covariance implied by the truth parameters."""
    return spec.loadings @ spec.factor_cov @ spec.loadings.T + np.diag(spec.idio_var)


def _draw_residuals(spec, periods, rng):
    """Factor-structured residual draws without forming the n x n matrix."""
    n = spec.loadings.shape[0]
    q = spec.loadings.shape[1]
    Lf = np.linalg.cholesky(spec.factor_cov + 1e-12 * np.eye(q))
    f = rng.standard_normal((periods, q)) @ Lf.T
    e = rng.standard_normal((periods, n)) * np.sqrt(spec.idio_var)[None, :]
    return f @ spec.loadings.T + e


def simulate_panel(spec, rng):
    """Sample an atomic panel and its true state paths.

    States follow the shared transition with optional level noise; the
    observed panel adds factor-structured residuals. Returns
    (values (T x n), states (T x p x n)).
    """
    T = spec.num_periods
    n = spec.level_means.shape[0]
    dlm = build_dlm_spec(spec.seasonal_period, 1.0)
    p, F, G = dlm.state_dim, dlm.regressors, dlm.transition
    theta = np.zeros((p, n))
    theta[0] = spec.level_means
    if spec.seasonal_period >= 2:
        s = spec.seasonal_period
        pattern = spec.seasonal_amplitude * np.sin(2 * np.pi * np.arange(s) / s)
        pattern = pattern - pattern.mean()
        for k in range(1, p):
            theta[k] = pattern[(s - k) % s]
    states = np.empty((T, p, n))
    resid = _draw_residuals(spec, T, rng)
    values = np.empty((T, n))
    for t in range(T):
        theta = G @ theta
        if spec.state_noise_sd > 0:
            theta[0] += spec.state_noise_sd * rng.standard_normal(n)
        states[t] = theta
        values[t] = F @ theta + resid[t]
    return values, states


def simulate_base_forecasts(residuals, rho, sigma_r, rng):
    """Forecast deviations from the generative calibration equation.

    ``residuals`` is (T x m) in raw units; ``rho`` and ``sigma_r`` are
    per-column. Columns with NaN rho come back all NaN (no forecast).
    """
    r = np.asarray(residuals, float)
    rho = np.asarray(rho, float)
    sigma_r = np.asarray(sigma_r, float)
    z = rng.standard_normal(r.shape)
    with np.errstate(invalid="ignore"):
        g = rho[None, :] ** 2 * r + (rho * np.sqrt(1.0 - rho**2) * sigma_r)[None, :] * z
    g[:, ~np.isfinite(rho)] = np.nan
    return g


@dataclass
class SimulatedDataset:
    """Everything a reconciliation or evaluation run consumes."""

    hierarchy: object
    panel_values: np.ndarray      # (T, n) observed atomic panel
    future_values: np.ndarray     # (H, n) held-out atomic actuals
    prior_mean_nodes: np.ndarray  # (T + H, m) true node-level prior means
    insample_forecasts: np.ndarray  # (T, m) node base forecasts, NaN = absent
    store: dict = field(default_factory=dict)  # (origin_pos, horizon) -> (m,) forecasts
    true_states: np.ndarray | None = None
    spec: SimSpec | None = None


def simulate_dataset(spec, horizon, first_origin=None):
    """Full synthetic bundle: panel, held-out actuals and base forecasts.

    Base forecasts are generated for every origin position from
    ``first_origin`` (default: last in-sample position) onward, horizons
    1..H, each with fresh forecast noise; in-sample forecasts reuse the
    one-step equation at every historical period.
    """
    rng = np.random.default_rng(spec.seed)
    h = build_hierarchy(spec.hierarchy_spec)
    S = summing_matrix(h)
    total = spec.num_periods + horizon
    full_spec = SimSpec(
        hierarchy_spec=spec.hierarchy_spec,
        num_periods=total,
        loadings=spec.loadings,
        factor_cov=spec.factor_cov,
        idio_var=spec.idio_var,
        rho=spec.rho,
        level_means=spec.level_means,
        seasonal_period=spec.seasonal_period,
        seasonal_amplitude=spec.seasonal_amplitude,
        state_noise_sd=spec.state_noise_sd,
        seed=spec.seed,
    )
    values, states = simulate_panel(full_spec, rng)
    dlm = build_dlm_spec(spec.seasonal_period, 1.0)
    prior_atomic = np.einsum("p,tpn->tn", dlm.regressors, states)
    prior_nodes = prior_atomic @ S.T
    node_resid = (values - prior_atomic) @ S.T
    sigma_nodes = np.sqrt(np.diag(S @ residual_covariance(spec) @ S.T))

    T = spec.num_periods
    insample = prior_nodes[:T] + simulate_base_forecasts(
        node_resid[:T], spec.rho, sigma_nodes, rng
    )
    if first_origin is None:
        first_origin = T - 1
    store = {}
    for origin in range(first_origin, total - 1):
        max_h = min(horizon, total - 1 - origin)
        g = simulate_base_forecasts(
            node_resid[origin + 1 : origin + 1 + max_h], spec.rho, sigma_nodes, rng
        )
        for k in range(max_h):
            store[(origin, k + 1)] = prior_nodes[origin + 1 + k] + g[k]
    return SimulatedDataset(
        hierarchy=h,
        panel_values=values[:T],
        future_values=values[T:],
        prior_mean_nodes=prior_nodes,
        insample_forecasts=insample,
        store=store,
        true_states=states,
        spec=spec,
    )
