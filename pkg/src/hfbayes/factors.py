"""Latent factor model for the cross-sectional residual covariance.

Factors align with the nodes of chosen hierarchy levels. Scores and loadings
are drawn by alternating cross-sectional and per-series regressions; factors
belonging to different levels are kept orthogonal by a covariance rotation,
and each factor is signed to move with its node's summed residuals.
"""

from dataclasses import dataclass, field

import numpy as np

from ._linalg import safe_cholesky
from .hierarchy import summing_matrix


@dataclass
class FactorModel:
    """Current covariance-model state carried between sampler sweeps."""

    loadings: np.ndarray         # (n, q)
    factor_cov: np.ndarray       # (q, q), block diagonal by factor level
    idio_var: np.ndarray         # (n,) specific variances, standardized units
    mask: np.ndarray             # (n, q) bool exposure pattern
    blocks: tuple                # factor count per factor level
    loading_scale: float         # prior sd for exposed loadings
    scores: np.ndarray | None = None      # (T, q) latest factor draw
    precision_cs: np.ndarray | None = None  # (T,) cross-sectional precisions
    precision_ts: np.ndarray | None = None  # (n,) per-series precisions


# Prior scale applied to loadings outside the exposure pattern; keeps the
# draw within ~1e-20 of zero without changing the regression structure.
MASKED_LOADING_SD = 1e-20


def exposure_mask(h):
    """Boolean (n x q): atomic series i loads on factor j iff i descends
    from factor node j."""
    rows = h.factor_node_rows
    if not rows:
        raise ValueError("hierarchy has no factor levels")
    S = summing_matrix(h)
    return S[rows].T.astype(bool)


def initial_factor_model(h, num_periods):
    """Zero-loadings starting state with unit precisions."""
    mask = exposure_mask(h)
    n, q = mask.shape
    k_levels = len(h.factor_levels)
    return FactorModel(
        loadings=np.zeros((n, q)),
        factor_cov=np.eye(q),
        idio_var=np.ones(n),
        mask=mask,
        blocks=h.factor_block_sizes(),
        loading_scale=1.0 / max(k_levels, 1),
        scores=None,
        precision_cs=np.ones(num_periods),
        precision_ts=np.ones(n),
    )


def _draw_regression(y, X, prior_prec_diag, prior_mean, h_prec, rng):
    """One draw from the Gaussian conditional of a linear regression with
    independent normal prior and known error precision."""
    q = X.shape[1]
    P = np.diag(prior_prec_diag) + h_prec * (X.T @ X)
    rhs = prior_prec_diag * prior_mean + h_prec * (X.T @ y)
    L = safe_cholesky(P)
    mean = np.linalg.solve(P, rhs)
    z = rng.standard_normal(q)
    return mean + np.linalg.solve(L.T, z), mean


def sample_factors(resid_std, loadings, rng, precisions=None):
    """Cross-sectional regression draw of the factor scores, one per period.

    Prior per period is standard normal on the scores with a Gamma(1, 1)
    error precision; the returned precisions feed the next sweep. Rows with
    missing residuals drop those series; a period with fewer active series
    than factors is rejected as ill-posed.
    """
    R = np.asarray(resid_std, float)
    T, n = R.shape
    q = loadings.shape[1]
    if precisions is None:
        precisions = np.ones(T)
    h_out = np.empty(T)
    scores = np.empty((T, q))
    complete = not np.isnan(R).any()
    eye = np.eye(q)
    if complete:
        G0 = loadings.T @ loadings  # (q, q)
        P = eye[None] + precisions[:, None, None] * G0[None]
        rhs = precisions[:, None] * (R @ loadings)
        mean = np.linalg.solve(P, rhs[..., None])[..., 0]
        L = np.linalg.cholesky(P)
        z = rng.standard_normal((T, q, 1))
        scores = mean + np.linalg.solve(L.transpose(0, 2, 1), z)[..., 0]
        err = R - scores @ loadings.T
        ssr = np.sum(err * err, axis=1)
        h_out = rng.gamma(1.0 + 0.5 * n, 1.0 / (1.0 + 0.5 * ssr))
    else:
        for t in range(T):
            active = ~np.isnan(R[t])
            n_act = int(active.sum())
            if n_act < q:
                raise ValueError(
                    f"period {t}: {n_act} active series cannot identify {q} factors"
                )
            X = loadings[active]
            y = R[t, active]
            draw, _ = _draw_regression(y, X, np.ones(q), np.zeros(q), precisions[t], rng)
            scores[t] = draw
            err = y - X @ draw
            h_out[t] = rng.gamma(1.0 + 0.5 * n_act, 1.0 / (1.0 + 0.5 * err @ err))
    return scores, h_out


def _block_slices(blocks):
    out = []
    start = 0
    for b in blocks:
        out.append(slice(start, start + b))
        start += b
    return out


def block_diagonal_cov(scores, blocks):
    """Empirical score covariance with between-level blocks zeroed."""
    cov = np.cov(scores, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    out = np.zeros_like(cov)
    for sl in _block_slices(blocks):
        out[sl, sl] = cov[sl, sl]
    return out


def rotate_factors(scores, blocks):
    """Rescale scores so their empirical covariance is block diagonal.

    The target covariance zeroes the between-level blocks of the empirical
    one; scores are post-multiplied by the ratio of the two Cholesky
    factors, a likelihood-preserving rotation.
    """
    scores = np.asarray(scores, float)
    cov0 = np.atleast_2d(np.cov(scores, rowvar=False, ddof=1))
    cov1 = np.zeros_like(cov0)
    for sl in _block_slices(blocks):
        cov1[sl, sl] = cov0[sl, sl]
    try:
        L0 = np.linalg.cholesky(cov0)
    except np.linalg.LinAlgError:
        raise ValueError("empirical factor covariance is singular") from None
    L1 = np.linalg.cholesky(cov1)
    A = L1 @ np.linalg.inv(L0)
    return scores @ A.T


def enforce_sign(scores, level_residual_sums):
    """Flip each factor so it correlates non-negatively with its node's
    summed residual series; exact zero correlation leaves the sign alone."""
    scores = np.asarray(scores, float)
    sums = np.asarray(level_residual_sums, float)
    out = scores.copy()
    for j in range(scores.shape[1]):
        s = sums[:, j]
        f = scores[:, j]
        ok = np.isfinite(s) & np.isfinite(f)
        if ok.sum() < 2:
            continue
        c = np.cov(f[ok], s[ok], ddof=1)[0, 1]
        if c < 0:
            out[:, j] = -f
    return out


def sample_loadings(resid_std, scores, mask, rng, loading_scale, precisions=None):
    """Per-series regression draw of the loadings given the scores.

    Exposed entries get a zero-mean normal prior at ``loading_scale``;
    entries outside the mask are shrunk by a near-zero prior scale. Error
    precisions follow Gamma(1, 1) updates and are returned alongside.
    """
    R = np.asarray(resid_std, float)
    T, n = R.shape
    q = scores.shape[1]
    if precisions is None:
        precisions = np.ones(n)
    sd = np.where(mask, loading_scale, MASKED_LOADING_SD)
    prior_prec = 1.0 / sd**2
    loadings = np.empty((n, q))
    h_out = np.empty(n)
    for i in range(n):
        keep = ~np.isnan(R[:, i])
        y = R[keep, i]
        X = scores[keep]
        draw, _ = _draw_regression(y, X, prior_prec[i], np.zeros(q), precisions[i], rng)
        loadings[i] = draw
        err = y - X @ draw
        h_out[i] = rng.gamma(1.0 + 0.5 * keep.sum(), 1.0 / (1.0 + 0.5 * err @ err))
    return loadings, h_out


def covariance(loadings, factor_cov, idio_var, scales=None):
    """Model-implied residual covariance, optionally rescaled to raw units.

    The standardized-unit matrix is loadings @ factor_cov @ loadings' plus
    the diagonal of specific variances; ``scales`` (per-series standard
    deviations) converts back to the data's units.
    """
    idio_var = np.asarray(idio_var, float)
    if np.any(idio_var <= 0):
        raise ValueError("specific variances must be positive")
    V = loadings @ factor_cov @ loadings.T + np.diag(idio_var)
    if scales is not None:
        scales = np.asarray(scales, float)
        V = V * scales[:, None] * scales[None, :]
    V = 0.5 * (V + V.T)
    return V
