"""Moment-based updating of atomic residuals from one level's forecasts.

Works in standardized forecast-deviation units: the forecast covariance is a
calibration-weighted residual correlation matrix plus independent noise, and
the update is the classical adjusted mean/variance pair, computed once per
level and applied to any deviation vector.
"""

from dataclasses import dataclass

import numpy as np

from ._linalg import safe_cholesky


@dataclass
class LevelUpdate:
    """Per-level gain and posterior covariance, fixed within a sweep."""

    level: int
    node_rows: np.ndarray      # rows of S contributing forecasts
    gain: np.ndarray           # (n, m_j): maps standardized deviations to updates
    post_cov: np.ndarray       # (n, n) adjusted covariance
    chol_post: np.ndarray      # Cholesky-like factor of post_cov


def forecast_moments(var_resid, rho_level, selector):
    """Covariance structure linking atomic residuals to one level's
    standardized forecast deviations.

    Returns (cov_rg, var_g): cov_rg is (n x m_j), var_g is (m_j x m_j) with
    unit diagonal. ``selector`` holds the level's rows of the summing
    matrix; ``rho_level`` the matching calibration coefficients.
    """
    var_resid = np.asarray(var_resid, float)
    rho = np.asarray(rho_level, float)
    S_j = np.atleast_2d(np.asarray(selector, float))
    level_cov = S_j @ var_resid @ S_j.T
    diag = np.diag(level_cov).copy()
    if np.any(diag <= 0):
        raise ValueError("a level series has zero variance under the residual model")
    inv_sd = 1.0 / np.sqrt(diag)
    corr = level_cov * inv_sd[:, None] * inv_sd[None, :]
    var_g = corr * rho[:, None] * rho[None, :] + np.diag(1.0 - rho**2)
    var_g = 0.5 * (var_g + var_g.T)
    cov_rg = var_resid @ S_j.T * (inv_sd * rho)[None, :]
    return cov_rg, var_g


def lbe_gain(cov_rg, var_g):
    """Regression gain cov_rg @ var_g^{-1}, with jitter if var_g is singular."""
    try:
        return np.linalg.solve(var_g, cov_rg.T).T
    except np.linalg.LinAlgError:
        jit = 1e-9 * np.trace(var_g) / var_g.shape[0]
        return np.linalg.solve(var_g + jit * np.eye(var_g.shape[0]), cov_rg.T).T


def lbe_update(dev_std, cov_rg, var_g, var_resid):
    """Adjusted mean and covariance of the atomic residuals given one
    level's standardized deviations.

    The adjusted covariance subtracts the explained part from the prior
    covariance, so it never exceeds the prior in the positive semidefinite
    order.
    """
    gain = lbe_gain(cov_rg, var_g)
    mean = gain @ np.asarray(dev_std, float)
    post = var_resid - gain @ cov_rg.T
    post = 0.5 * (post + post.T)
    return mean, post


def build_level_update(level, node_rows, var_resid, rho_level, selector):
    """Precompute the gain and adjusted covariance for a level."""
    cov_rg, var_g = forecast_moments(var_resid, rho_level, selector)
    gain = lbe_gain(cov_rg, var_g)
    post = var_resid - gain @ cov_rg.T
    post = 0.5 * (post + post.T)
    return LevelUpdate(
        level=level,
        node_rows=np.asarray(node_rows, int),
        gain=gain,
        post_cov=post,
        chol_post=safe_cholesky(post),
    )


def sample_level_update(mean, cov, rng, chol=None):
    """Gaussian draw of the level's atomic-residual update."""
    mean = np.asarray(mean, float)
    L = safe_cholesky(cov) if chol is None else chol
    return mean + L @ rng.standard_normal(mean.shape[0])
