"""Combination of per-level updates with one shared weight vector.

The weights are fitted by a stacked regression of selected node residuals on
the levels' in-sample fitted updates, with a common coefficient vector
across equations, an equal-weights prior, and a high-precision pseudo
observation pinning the weights' sum at one. The equation error precision
matrix gets a Wishart draw seeded from the residual covariance model.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import wishart

from ._linalg import safe_cholesky

SUM_PRECISION = 1e8  # pseudo-observation precision for the sum-to-one constraint


@dataclass
class CombinationState:
    """Weights, error precision and the node selection used to fit them."""

    weights: np.ndarray        # (k,)
    error_precision: np.ndarray  # (q, q)
    selected_rows: np.ndarray  # (q,) node rows used in the fit
    prior_mean: np.ndarray     # (k,) equal weights
    prior_sd: np.ndarray       # (k,)


def initial_combination(num_levels, selected_rows):
    k = num_levels
    return CombinationState(
        weights=np.full(k, 1.0 / k),
        error_precision=np.eye(len(selected_rows)),
        selected_rows=np.asarray(selected_rows, int),
        prior_mean=np.full(k, 1.0 / k),
        prior_sd=np.full(k, 2.0 / k),
    )


def assemble_design(fitted_updates, selector_sel, node_residuals_sel):
    """Stack targets and regressors for the weight regression.

    ``fitted_updates`` is one (T x n) in-sample fitted atomic update per
    level; ``selector_sel`` the selected nodes' rows of the summing matrix
    (q x n); ``node_residuals_sel`` the selected nodes' prior residuals
    (T x q). Rows with any missing value are dropped. Returns targets
    (T' x q) and design (T' x q x k).
    """
    if not fitted_updates:
        raise ValueError("no level updates to combine")
    T, q = node_residuals_sel.shape
    k = len(fitted_updates)
    design = np.empty((T, q, k))
    for j, upd in enumerate(fitted_updates):
        design[:, :, j] = upd @ selector_sel.T
    keep = np.isfinite(node_residuals_sel).all(axis=1) & np.isfinite(design).all(axis=(1, 2))
    return node_residuals_sel[keep], design[keep]


def sample_weights(design, targets, state, rng):
    """Draw the shared weights given the current error precision.

    The Gaussian conditional combines the equal-weights prior, the stacked
    data, and the sum-to-one pseudo observation; the draw is then projected
    exactly onto the sum-one constraint (the pseudo precision alone leaves
    residual slack of order 1e-4).
    """
    k = state.weights.shape[0]
    H = state.error_precision
    prior_prec = np.diag(1.0 / state.prior_sd**2)
    P = prior_prec + SUM_PRECISION * np.ones((k, k))
    rhs = prior_prec @ state.prior_mean + SUM_PRECISION * np.ones(k)
    if targets.size:
        HC = np.einsum("ab,tbk->tak", H, design)
        P = P + np.einsum("tak,taj->kj", design, HC)
        rhs = rhs + np.einsum("tak,ta->k", HC, targets)
    L = safe_cholesky(P)
    mean = np.linalg.solve(P, rhs)
    draw = mean + np.linalg.solve(L.T, rng.standard_normal(k))
    draw = draw + (1.0 - draw.sum()) / k  # exact projection onto sum == 1
    return draw


def sample_error_precision(design, targets, weights, prior_scale_cov, rng, prior_dof=None):
    """Wishart draw of the equation error precision.

    ``prior_scale_cov`` is the model-implied covariance of the selected
    nodes (the "off the shelf" prior); a relative ridge keeps it invertible
    when node selections overlap and the matrix is singular.
    """
    q = prior_scale_cov.shape[0]
    dof0 = q + 2 if prior_dof is None else prior_dof
    if dof0 < q:
        raise ValueError(f"prior degrees of freedom {dof0} below dimension {q}")
    ridge = 1e-6 * max(np.trace(prior_scale_cov) / q, 1e-30)
    prior_inv_scale = dof0 * (prior_scale_cov + ridge * np.eye(q))
    if targets.size:
        err = targets - design @ weights
        post_inv_scale = prior_inv_scale + err.T @ err
        dof = dof0 + targets.shape[0]
    else:
        post_inv_scale = prior_inv_scale
        dof = dof0
    post_inv_scale = 0.5 * (post_inv_scale + post_inv_scale.T)
    scale = np.linalg.inv(post_inv_scale)
    scale = 0.5 * (scale + scale.T)
    draw = wishart.rvs(df=dof, scale=scale, random_state=rng)
    return np.atleast_2d(draw)


def combine(prior_path, level_draws, weights, S):
    """Coherent forecast path: aggregate the prior plus weighted updates.

    ``prior_path`` is (H x n); ``level_draws`` a list of (H x n) update
    draws matching ``weights``. Every output row lies in the column space
    of S by construction.
    """
    prior_path = np.asarray(prior_path, float)
    total = prior_path.copy()
    if len(level_draws) != len(weights):
        raise ValueError("one update per weight required")
    for w, d in zip(weights, level_draws):
        total = total + w * d
    return total @ S.T
