"""Shared numerical helpers: guarded Cholesky factors and truncated normal draws."""

import numpy as np
from scipy.special import ndtr, ndtri

# Relative jitter ladder tried before falling back to an eigenvalue root.
_JITTERS = (1e-9, 1e-7, 1e-5)


def eig_sqrt(mat):
    """Symmetric square root L with L @ L.T == mat, eigenvalues clipped at zero."""
    w, v = np.linalg.eigh(mat)
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


def safe_cholesky(mat):
    """Lower Cholesky factor of a symmetric PSD matrix.

    Escalating diagonal jitter handles marginal indefiniteness; singular or
    all-zero input falls back to an eigenvalue square root (so a zero matrix
    yields a zero factor).
    """
    mat = np.asarray(mat, dtype=float)
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    n = mat.shape[0]
    scale = np.trace(mat) / max(n, 1)
    if scale <= 0.0 or not np.isfinite(scale):
        return eig_sqrt(mat)
    eye = np.eye(n)
    for jit in _JITTERS:
        try:
            return np.linalg.cholesky(mat + jit * scale * eye)
        except np.linalg.LinAlgError:
            continue
    return eig_sqrt(mat)


def batched_cholesky(mats):
    """Cholesky over a stack (..., p, p), per-item fallback via safe_cholesky."""
    try:
        return np.linalg.cholesky(mats)
    except np.linalg.LinAlgError:
        flat = mats.reshape(-1, mats.shape[-2], mats.shape[-1])
        out = np.stack([safe_cholesky(m) for m in flat])
        return out.reshape(mats.shape)


def draw_mvn(mean, cov, rng, size=None):
    """Multivariate normal draws via a guarded Cholesky factor.

    Returns shape (len(mean),) when size is None, else (size, len(mean)).
    """
    mean = np.asarray(mean, dtype=float)
    chol = safe_cholesky(cov)
    if size is None:
        return mean + chol @ rng.standard_normal(mean.shape[0])
    z = rng.standard_normal((size, mean.shape[0]))
    return mean + z @ chol.T


def _one_sided_tail(alpha, rng, max_iter=1000):
    """Standard normal truncated to [alpha, inf) for large alpha, by
    exponential-proposal rejection."""
    lam = 0.5 * (alpha + np.sqrt(alpha * alpha + 4.0))
    for _ in range(max_iter):
        x = alpha + rng.exponential(1.0 / lam)
        if rng.random() <= np.exp(-0.5 * (x - lam) ** 2):
            return x
    return alpha


def truncated_normal(mean, sd, low, high, rng):
    """Draws from N(mean, sd^2) restricted to [low, high], elementwise.

    Uses the inverse-CDF construction; when the interval probability mass
    underflows, falls back to tail rejection from the nearer boundary.
    Scalars or arrays broadcast; returns an array of the broadcast shape.
    """
    mean, sd = np.broadcast_arrays(np.asarray(mean, float), np.asarray(sd, float))
    shape = mean.shape
    mean = np.atleast_1d(mean).astype(float)
    sd = np.atleast_1d(sd).astype(float)
    a = (low - mean) / sd
    b = (high - mean) / sd
    pa, pb = ndtr(a), ndtr(b)
    u = pa + (pb - pa) * rng.random(mean.shape)
    x = mean + sd * ndtri(u)
    bad = ~np.isfinite(x) | ((pb - pa) < 1e-14)
    if np.any(bad):
        for idx in np.flatnonzero(bad):
            ai, bi = a.flat[idx], b.flat[idx]
            if ai > 0:  # interval entirely above the mean
                z = _one_sided_tail(ai, rng)
                z = min(z, bi)
            elif bi < 0:  # entirely below: reflect
                z = -_one_sided_tail(-bi, rng)
                z = max(z, ai)
            else:
                z = 0.5 * (ai + bi)
            x.flat[idx] = mean.flat[idx] + sd.flat[idx] * z
    x = np.clip(x, low, high)
    return x.reshape(shape) if shape else float(x[0])


def min_psd_eigenvalue(mat):
    """Smallest eigenvalue of a symmetric matrix (PSD-order checks)."""
    return float(np.linalg.eigvalsh(mat)[0])


def nan_column_stats(values, ddof=1):
    """Column means and standard deviations skipping NaN, without the
    RuntimeWarnings numpy's nan-reductions emit on empty columns.

    Columns with no finite entries (or not enough for the ddof) come back
    NaN.
    """
    v = np.atleast_2d(np.asarray(values, dtype=float))
    finite = np.isfinite(v)
    counts = finite.sum(axis=0)
    safe = np.where(finite, v, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, safe.sum(axis=0) / counts, np.nan)
        centered = np.where(finite, v - means, 0.0)
        denom = counts - ddof
        var = np.where(denom > 0, (centered**2).sum(axis=0) / np.maximum(denom, 1), np.nan)
    return means, np.sqrt(var)


def nan_column_mean(values):
    return nan_column_stats(values, ddof=1)[0]
