"""Factor covariance model: regressions, rotation, sign and assembly."""

import numpy as np
import pytest

from hfbayes.factors import (
    block_diagonal_cov,
    covariance,
    enforce_sign,
    exposure_mask,
    initial_factor_model,
    rotate_factors,
    sample_factors,
    sample_loadings,
)
from hfbayes.hierarchy import build_hierarchy, summing_matrix

from test_hierarchy import tourism_style_spec, toy_spec


def two_group_hierarchy(n=20):
    ids = [f"s{i:02d}" for i in range(n)]
    return build_hierarchy(
        {
            "atomic": ids,
            "levels": [
                {"name": "total", "labels": {s: "Total" for s in ids}},
                {
                    "name": "group",
                    "labels": {s: ("G1" if i < n // 2 else "G2") for i, s in enumerate(ids)},
                },
            ],
            "factor_levels": ["total", "group"],
        }
    )


def test_exposure_mask_toy_all_true():
    h = build_hierarchy(toy_spec())
    mask = exposure_mask(h)
    assert mask.shape == (2, 1)
    assert mask.all()


def test_exposure_mask_tourism_three_parents():
    h = build_hierarchy(tourism_style_spec())
    mask = exposure_mask(h)
    assert mask.shape == (28, 12)
    assert np.array_equal(mask.sum(axis=1), np.full(28, 3))


def test_sample_factors_prior_recovery_with_zero_loadings():
    rng = np.random.default_rng(0)
    T, n, q = 4000, 6, 2
    resid = rng.standard_normal((T, n))
    scores, _ = sample_factors(resid, np.zeros((n, q)), rng)
    assert abs(scores.mean()) < 0.05
    assert np.allclose(scores.var(axis=0, ddof=1), 1.0, atol=0.1)


def test_sample_factors_mean_matches_ridge_oracle():
    rng = np.random.default_rng(1)
    n, q = 5, 2
    loadings = rng.normal(size=(n, q))
    r_row = rng.normal(size=n)
    h = 3.0
    T = 6000
    resid = np.tile(r_row, (T, 1))
    scores, _ = sample_factors(resid, loadings, rng, precisions=np.full(T, h))
    oracle = np.linalg.solve(
        loadings.T @ loadings * h + np.eye(q), loadings.T @ r_row * h
    )
    post_cov = np.linalg.inv(loadings.T @ loadings * h + np.eye(q))
    se = np.sqrt(np.diag(post_cov) / T)
    assert np.all(np.abs(scores.mean(axis=0) - oracle) < 4 * se)


def test_sample_factors_high_precision_hits_cross_sectional_mean():
    rng = np.random.default_rng(2)
    n = 1000
    f_true = 0.7
    resid = np.full((1, n), f_true)
    scores, _ = sample_factors(resid, np.ones((n, 1)), rng, precisions=np.array([1e6]))
    assert abs(scores[0, 0] - f_true) < 1e-2


def test_sample_factors_rejects_underdetermined_period():
    resid = np.array([[1.0, np.nan, np.nan]])
    with pytest.raises(ValueError, match="identify"):
        sample_factors(resid, np.ones((3, 2)), np.random.default_rng(0))


def test_rotation_identity_when_already_block_diagonal():
    rng = np.random.default_rng(3)
    f = rng.standard_normal((500, 2))
    # demean, then orthogonalize, so the empirical covariance is diagonal
    f -= f.mean(axis=0)
    f[:, 1] -= f[:, 0] * (f[:, 0] @ f[:, 1]) / (f[:, 0] @ f[:, 0])
    out = rotate_factors(f, (1, 1))
    assert np.allclose(out, f, atol=1e-10)


def test_rotation_zeroes_cross_level_covariance():
    rng = np.random.default_rng(4)
    base = rng.standard_normal((800, 2))
    f = base.copy()
    f[:, 1] = 0.5 * base[:, 0] + np.sqrt(1 - 0.25) * base[:, 1]
    out = rotate_factors(f, (1, 1))
    cov = np.cov(out, rowvar=False, ddof=1)
    assert abs(cov[0, 1]) < 1e-12 * np.sqrt(cov[0, 0] * cov[1, 1])


def test_rotation_preserves_span():
    rng = np.random.default_rng(5)
    f = rng.standard_normal((300, 3))
    out = rotate_factors(f, (1, 2))
    coef, residual, rank, _ = np.linalg.lstsq(f, out, rcond=None)
    assert rank == 3
    assert np.max(np.abs(f @ coef - out)) < 1e-8


def test_rotation_rejects_singular():
    f = np.ones((50, 2))
    f[:, 1] = f[:, 0]
    with pytest.raises((ValueError, np.linalg.LinAlgError)):
        rotate_factors(f + 1e-16, (1, 1))


def test_enforce_sign_cases():
    rng = np.random.default_rng(6)
    f = rng.standard_normal((200, 3))
    sums = np.empty_like(f)
    sums[:, 0] = -f[:, 0]  # negatively aligned: flip
    sums[:, 1] = f[:, 1]  # already positive: identity
    sums[:, 2] = 0.0  # zero correlation: leave alone
    out = enforce_sign(f, sums)
    assert np.array_equal(out[:, 0], -f[:, 0])
    assert np.array_equal(out[:, 1], f[:, 1])
    assert np.array_equal(out[:, 2], f[:, 2])


def test_masked_loadings_shrink_to_zero():
    rng = np.random.default_rng(7)
    T, n, q = 100, 4, 2
    scores = rng.standard_normal((T, q))
    resid = rng.standard_normal((T, n))
    mask = np.zeros((n, q), dtype=bool)
    mask[:, 0] = True
    loadings, _ = sample_loadings(resid, scores, mask, rng, loading_scale=1.0)
    assert np.max(np.abs(loadings[:, 1])) < 1e-6


def test_loadings_conjugate_oracle():
    rng = np.random.default_rng(8)
    T = 500
    f = rng.standard_normal((T, 1))
    resid = 0.8 * f[:, 0] + rng.normal(scale=0.6, size=T)
    mask = np.ones((1, 1), dtype=bool)
    draws = []
    prec = None
    for _ in range(200):
        loadings, prec = sample_loadings(
            resid[:, None], f, mask, rng, loading_scale=1.0, precisions=prec
        )
        draws.append(loadings[0, 0])
    assert abs(np.mean(draws[50:]) - 0.8) < 0.1


def test_loadings_prior_recovery_with_zero_scores():
    rng = np.random.default_rng(9)
    T, n = 4000, 1
    scores = np.zeros((T, 1))
    resid = rng.standard_normal((T, n))
    mask = np.ones((n, 1), dtype=bool)
    samples = [
        sample_loadings(resid, scores, mask, rng, loading_scale=0.5)[0][0, 0]
        for _ in range(2000)
    ]
    assert abs(np.std(samples) - 0.5) < 0.05
    assert abs(np.mean(samples)) < 0.05


def test_covariance_two_series_closed_form():
    V = covariance(np.ones((2, 1)), np.eye(1), np.full(2, 99.0))
    assert np.array_equal(V, np.array([[100.0, 1.0], [1.0, 100.0]]))


def test_covariance_aggregate_variance_split():
    n = 1000
    loadings = np.ones((n, 1))
    V = covariance(loadings, np.eye(1), np.full(n, 99.0))
    ones = np.ones(n)
    assert ones @ V @ ones == 1_099_000.0
    V_no_factor = covariance(np.zeros((n, 1)), np.eye(1), np.full(n, 99.0))
    assert ones @ V_no_factor @ ones == 99_000.0


def test_covariance_zero_loadings_is_diagonal():
    idio = np.array([1.0, 2.0, 3.0])
    V = covariance(np.zeros((3, 2)), np.eye(2), idio)
    assert np.array_equal(V, np.diag(idio))


def test_covariance_rejects_nonpositive_idio():
    with pytest.raises(ValueError, match="positive"):
        covariance(np.zeros((2, 1)), np.eye(1), np.array([1.0, 0.0]))


def test_covariance_rescaling():
    scales = np.array([2.0, 3.0])
    V = covariance(np.ones((2, 1)), np.eye(1), np.ones(2), scales)
    assert np.allclose(V, np.array([[8.0, 6.0], [6.0, 18.0]]))


def test_aggregated_covariance_identity():
    h = two_group_hierarchy(6)
    S = summing_matrix(h)
    rng = np.random.default_rng(10)
    loadings = rng.normal(size=(6, 3))
    fcov = np.diag(rng.uniform(0.5, 2.0, size=3))
    idio = rng.uniform(0.2, 1.0, size=6)
    V = covariance(loadings, fcov, idio)
    lhs = S @ V @ S.T
    rhs = S @ loadings @ fcov @ loadings.T @ S.T + S @ np.diag(idio) @ S.T
    assert np.allclose(lhs, rhs, atol=1e-12)


def three_group_hierarchy(n=20):
    ids = [f"s{i:02d}" for i in range(n)]
    third = (n + 2) // 3
    labels = {s: f"G{min(i // third, 2) + 1}" for i, s in enumerate(ids)}
    return build_hierarchy(
        {
            "atomic": ids,
            "levels": [{"name": "group", "labels": labels}],
            "factor_levels": ["group"],
        }
    )


def test_factor_model_recovery():
    """Simulate from a known sparse-loadings truth and recover it.

    Three disjoint group factors: the exposure masks pin which factor a
    series may load on, the mean-zero unit prior pins the factor scale and
    the sign constraint pins orientation, so the loadings are identified.
    """
    rng = np.random.default_rng(11)
    n, T = 20, 500
    h = three_group_hierarchy(n)
    mask = exposure_mask(h)
    blocks = h.factor_block_sizes()
    q = 3
    gen = np.random.default_rng(123)
    truth = mask * gen.uniform(0.5, 0.9, size=(n, q))
    idio_true = 0.2
    f_true = gen.standard_normal((T, q))
    resid = f_true @ truth.T + gen.normal(scale=np.sqrt(idio_true), size=(T, n))
    scales = resid.std(axis=0, ddof=1)
    r_std = (resid - resid.mean(axis=0)) / scales
    truth_std = truth / scales[:, None]

    member_rows = summing_matrix(h)[h.factor_node_rows]
    fm = initial_factor_model(h, T)
    est = np.zeros_like(truth)
    kept = 0
    loadings, prec_cs, prec_ts = fm.loadings, fm.precision_cs, fm.precision_ts
    for sweep in range(300):
        scores, prec_cs = sample_factors(r_std, loadings, rng, prec_cs)
        scores = rotate_factors(scores, blocks)
        scores = enforce_sign(scores, r_std @ member_rows.T)
        loadings, prec_ts = sample_loadings(
            r_std, scores, mask, rng, fm.loading_scale, prec_ts
        )
        if sweep >= 100:
            est += loadings
            kept += 1
    est /= kept
    rel_err = np.linalg.norm(est - truth_std) / np.linalg.norm(truth_std)
    assert rel_err < 0.15


def test_block_diagonal_cov_structure():
    rng = np.random.default_rng(12)
    scores = rng.standard_normal((400, 3))
    out = block_diagonal_cov(scores, (1, 2))
    assert out[0, 1] == 0.0 and out[0, 2] == 0.0
    full = np.cov(scores, rowvar=False, ddof=1)
    assert np.allclose(out[1:, 1:], full[1:, 1:])
