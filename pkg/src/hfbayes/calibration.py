"""Forecast calibration: per-series information coefficients with shrinkage.

Each series' coefficient measures how much of the standardized prior
residual its standardized base-forecast deviation explains. Coefficients are
drawn from conditionals truncated to [0, 1] and shrunk toward one
system-wide value.
"""

from dataclasses import dataclass, replace

import numpy as np

from ._linalg import nan_column_stats, truncated_normal

PRIOR_SD_SERIES = 0.1  # shrinkage of per-series coefficients to the global one
PRIOR_SD_GLOBAL = 0.5  # prior sd of the global coefficient around zero


@dataclass
class CalibrationState:
    """Coefficients and regression precisions carried between sweeps."""

    rho: np.ndarray          # (m,) per-series coefficients in [0, 1]
    rho0: float              # system-wide coefficient
    precision: np.ndarray    # (m,) regression error precisions
    prior_sd: float = PRIOR_SD_SERIES
    prior_sd0: float = PRIOR_SD_GLOBAL


def initial_calibration(num_series, rho_init=0.1):
    return CalibrationState(
        rho=np.full(num_series, float(rho_init)),
        rho0=float(rho_init),
        precision=np.ones(num_series),
    )


def column_stats(values):
    """Per-column mean and sample standard deviation, NaN-aware."""
    return nan_column_stats(values, ddof=1)


def standardize(panel_values):
    """Demean each column and scale it to unit sample standard deviation.

    Returns the standardized array and the scale vector. Columns must have
    at least two distinct values; a zero-variance column is an error.
    """
    values = np.asarray(panel_values, dtype=float)
    means, sds = column_stats(values)
    if np.any(~np.isfinite(sds)) or np.any(sds <= 0):
        bad = int(np.flatnonzero(~np.isfinite(sds) | (sds <= 0))[0])
        raise ValueError(f"column {bad} has zero variance and cannot be standardized")
    return (values - means) / sds, sds


def _conditional_params(sum_gg, sum_gr, h_prec, rho0, prior_sd):
    """Gaussian conditional (mean, sd) for one coefficient before truncation."""
    prec = 1.0 / prior_sd**2 + h_prec * sum_gg
    mean = (rho0 / prior_sd**2 + h_prec * sum_gr) / prec
    return mean, 1.0 / np.sqrt(prec)


def sample_calibration(resid_std, dev_std, state, rng, include=None):
    """One sweep of the calibration block.

    ``resid_std`` and ``dev_std`` are (T x m) standardized residuals and
    forecast deviations; NaN rows are skipped per series. ``include`` marks
    the series with usable base forecasts; excluded series draw their
    coefficient from the prior alone and contribute nothing to the global
    update. All coefficient draws land in [0, 1].
    """
    R = np.asarray(resid_std, float)
    G = np.asarray(dev_std, float)
    if R.shape != G.shape:
        raise ValueError(f"shape mismatch: residuals {R.shape} vs deviations {G.shape}")
    if np.isinf(R).any() or np.isinf(G).any():
        raise ValueError("non-finite values in calibration inputs")
    m = R.shape[1]
    if include is None:
        include = np.ones(m, dtype=bool)
    include = np.asarray(include, dtype=bool)

    ok = np.isfinite(R) & np.isfinite(G)
    Rz = np.where(ok, R, 0.0)
    Gz = np.where(ok, G, 0.0)
    counts = ok.sum(axis=0)
    sum_gg = np.sum(Gz * Gz, axis=0)
    sum_gr = np.sum(Gz * Rz, axis=0)

    rho = np.empty(m)
    h_new = state.precision.copy()
    mean, sd = _conditional_params(
        np.where(include, sum_gg, 0.0),
        np.where(include, sum_gr, 0.0),
        state.precision,
        state.rho0,
        state.prior_sd,
    )
    rho = truncated_normal(mean, sd, 0.0, 1.0, rng)

    # error precisions: Gamma(1,1) prior, only data-bearing series update
    ssr = np.sum((Rz - rho[None, :] * Gz) ** 2 * ok, axis=0)
    shape = 1.0 + 0.5 * np.where(include, counts, 0.0)
    rate = 1.0 + 0.5 * np.where(include, ssr, 0.0)
    h_new = rng.gamma(shape, 1.0 / rate)

    # global coefficient: normal conditional given the calibrated children
    n_inc = int(include.sum())
    prec0 = 1.0 / state.prior_sd0**2 + n_inc / state.prior_sd**2
    mean0 = (rho[include].sum() / state.prior_sd**2) / prec0
    rho0 = float(mean0 + rng.standard_normal() / np.sqrt(prec0))

    if np.any((rho < 0) | (rho > 1)):
        raise AssertionError("calibration coefficient left [0, 1]")
    return replace(state, rho=rho, rho0=rho0, precision=h_new)
