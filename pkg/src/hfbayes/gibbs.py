"""Posterior sampler orchestrating the full reconciliation pipeline.

Each sweep draws state paths, refits the residual covariance model,
recalibrates the base forecasts, propagates every level's information to the
atomic series and combines the levels into one coherent forecast path. Warm
up, thinning and seeding follow the run configuration; convergence is
tracked by the split potential scale reduction factor.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from ._linalg import min_psd_eigenvalue, nan_column_stats
from .calibration import column_stats, initial_calibration, sample_calibration
from .combination import (
    assemble_design,
    combine,
    initial_combination,
    sample_error_precision,
    sample_weights,
)
from .dlm import backward_sample, build_dlm_spec, forecast_prior, forward_filter
from .factors import (
    block_diagonal_cov,
    covariance,
    enforce_sign,
    initial_factor_model,
    rotate_factors,
    sample_factors,
    sample_loadings,
)
from .hierarchy import summing_matrix
from .panel import Panel
from .propagation import build_level_update, sample_level_update

SWEEP_BLOCKS = ("states", "factors", "calibration", "propagation", "combination")


@dataclass
class GibbsConfig:
    """Run configuration for the sampler."""

    warmup: int = 1000
    samples: int = 2000
    thin: int = 2
    chains: int = 1
    seed: int = 0
    discount: float = 0.995
    horizon: int = 12
    seasonal_period: int = 0
    factor_levels: list | None = None       # level names overriding the hierarchy
    combination_series: list | None = None  # node ids fitted in the combination
    min_calibration_obs: int = 3
    validate_draws: bool = True

    def __post_init__(self):
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if not self.samples >= self.thin >= 1:
            raise ValueError("need samples >= thin >= 1")
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")

    @property
    def kept_per_chain(self):
        return len(range(0, self.samples, self.thin))


@dataclass
class AlignedBaseForecasts:
    """Base forecasts aligned to a panel: in-sample one-step values and the
    out-of-sample grid. NaN marks absent forecasts."""

    insample: np.ndarray  # (T, m)
    future: np.ndarray    # (H, m)


@dataclass
class PosteriorSamples:
    """Kept draws from all chains plus convergence diagnostics."""

    paths: np.ndarray          # (chains, kept, H, m) coherent forecast draws
    rho: np.ndarray            # (chains, kept, m)
    rho0: np.ndarray           # (chains, kept)
    weights: np.ndarray        # (chains, kept, k)
    factor_scores: np.ndarray  # (chains, kept, T, q)
    node_ids: list
    active_levels: list
    level_names: list
    selected_rows: np.ndarray
    rhat_values: dict
    sweep_trace: list
    config: GibbsConfig

    @property
    def num_kept(self):
        return self.paths.shape[0] * self.paths.shape[1]

    def flat_paths(self):
        c, k, H, m = self.paths.shape
        return self.paths.reshape(c * k, H, m)

    def mean_path(self):
        return self.paths.mean(axis=(0, 1))


def rhat(traces):
    """Split potential scale reduction factor of a scalar trace.

    ``traces`` is (chains, draws) or a single 1-D chain; every chain is
    split in half, and the usual between/within variance ratio is returned.
    Identical constant chains give exactly 1 (with a warning).
    """
    a = np.asarray(traces, float)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ValueError("traces must be 1- or 2-dimensional")
    draws = a.shape[1]
    if draws < 4:
        raise ValueError("need at least 4 draws per chain")
    half = draws // 2
    pieces = np.concatenate([a[:, :half], a[:, draws - half :]], axis=0)
    within = pieces.var(axis=1, ddof=1).mean()
    if within == 0.0:
        warnings.warn("zero within-chain variance; returning rhat = 1")
        return 1.0
    between = half * pieces.mean(axis=1).var(ddof=1)
    var_hat = (half - 1) / half * within + between / half
    return float(np.sqrt(var_hat / within))


def _usable_nodes(insample, future, min_obs):
    """Nodes whose base forecasts can be calibrated and applied: enough
    in-sample values with spread, and a complete out-of-sample grid."""
    counts = np.isfinite(insample).sum(axis=0)
    sds = nan_column_stats(insample)[1]
    spread = np.isfinite(sds) & (sds > 1e-12)
    complete_future = np.isfinite(future).all(axis=0)
    return (counts >= min_obs) & spread & complete_future


def _floor_scales(sds, fallback=1.0):
    out = np.where(np.isfinite(sds) & (sds > 1e-12), sds, fallback)
    return out


def run_reconciliation(config, hierarchy, atomic_panel, base_forecasts):
    """Run the sampler and return thinned post-warm-up draws.

    ``base_forecasts`` is an AlignedBaseForecasts; levels whose nodes never
    carry usable forecasts contribute no update and no combination weight.
    """
    h = hierarchy
    if config.factor_levels is not None:
        idx = tuple(h.level_index(name) for name in config.factor_levels)
        h = replace(h, factor_levels=idx)
    obs = atomic_panel.values if isinstance(atomic_panel, Panel) else np.asarray(atomic_panel, float)
    T, n = obs.shape
    m = h.num_nodes
    H = config.horizon
    S = summing_matrix(h)
    ins = np.asarray(base_forecasts.insample, float)
    fut = np.asarray(base_forecasts.future, float)
    if ins.shape != (T, m):
        raise ValueError(f"in-sample forecasts shaped {ins.shape}, expected {(T, m)}")
    if fut.shape != (H, m):
        raise ValueError(f"future forecasts shaped {fut.shape}, expected {(H, m)}")

    usable = _usable_nodes(ins, fut, config.min_calibration_obs)
    level_nodes = {}
    for lev in range(h.num_levels):
        rows = np.array([r for r in h.level_rows(lev) if usable[r]], dtype=int)
        if rows.size:
            level_nodes[lev] = rows
    active_levels = sorted(level_nodes)
    k = len(active_levels)

    if config.combination_series:
        selected = np.array([h.node_row(s) for s in config.combination_series], dtype=int)
    else:
        selected = np.array(h.factor_node_rows, dtype=int)
    S_sel = S[selected]

    dlm_spec = build_dlm_spec(config.seasonal_period, config.discount)
    fs = forward_filter(dlm_spec, obs)
    F = dlm_spec.regressors
    mask = None
    blocks = h.factor_block_sizes()
    member_rows = S[h.factor_node_rows]  # (q, n)

    kept = config.kept_per_chain
    q = h.num_factors
    paths = np.empty((config.chains, kept, H, m))
    rho_tr = np.empty((config.chains, kept, m))
    rho0_tr = np.empty((config.chains, kept))
    w_tr = np.empty((config.chains, kept, k))
    score_tr = np.empty((config.chains, kept, T, q))
    sweep_trace = []

    for chain in range(config.chains):
        rng = np.random.default_rng([config.seed, chain])
        fm = initial_factor_model(h, T)
        if mask is None:
            mask = fm.mask
        cal = initial_calibration(m)
        comb = initial_combination(max(k, 1), selected)
        kept_i = 0
        total_sweeps = config.warmup + config.samples
        for sweep in range(total_sweeps):
            trace = []

            # states: joint path draw and prior forecast path
            trace.append("states")
            theta = backward_sample(fs, rng)
            prior_path = forecast_prior(dlm_spec, theta, fs, H, rng)
            fitted = np.einsum("p,tpn->tn", F, theta)
            r_atomic = obs - fitted

            # factors: residual covariance model refit
            trace.append("factors")
            r_means, r_sds = column_stats(r_atomic)
            r_sds = _floor_scales(r_sds)
            r_std = (r_atomic - r_means) / r_sds
            scores, h_cs = sample_factors(r_std, fm.loadings, rng, fm.precision_cs)
            scores = rotate_factors(scores, blocks)
            scores = enforce_sign(scores, r_std @ member_rows.T)
            loadings, h_ts = sample_loadings(
                r_std, scores, fm.mask, rng, fm.loading_scale, fm.precision_ts
            )
            factor_cov = block_diagonal_cov(scores, blocks)
            idio = 1.0 / h_ts
            var_resid = covariance(loadings, factor_cov, idio, r_sds)
            fm = replace(
                fm,
                loadings=loadings,
                factor_cov=factor_cov,
                idio_var=idio,
                scores=scores,
                precision_cs=h_cs,
                precision_ts=h_ts,
            )

            # calibration: per-node coefficients against this sweep's prior
            trace.append("calibration")
            prior_nodes = fitted @ S.T
            r_nodes = r_atomic @ S.T
            g_ins = ins - prior_nodes
            g_means, g_sds = column_stats(g_ins)
            g_sds = _floor_scales(g_sds)
            rn_means, rn_sds = column_stats(r_nodes)
            rn_sds = _floor_scales(rn_sds)
            r_nodes_std = (r_nodes - rn_means) / rn_sds
            g_std = (g_ins - g_means) / g_sds
            cal = sample_calibration(r_nodes_std, g_std, cal, rng, include=usable)

            # propagation: level-wise gains, fitted updates and horizon draws
            trace.append("propagation")
            prior_fut_nodes = prior_path @ S.T
            g_fut_std = (fut - prior_fut_nodes - g_means) / g_sds
            fitted_updates = []
            level_draws = []
            for lev in active_levels:
                rows = level_nodes[lev]
                lu = build_level_update(lev, rows, var_resid, cal.rho[rows], S[rows])
                fitted_updates.append(g_std[:, rows] @ lu.gain.T)
                draws = np.empty((H, n))
                for step in range(H):
                    mean = lu.gain @ g_fut_std[step, rows]
                    draws[step] = sample_level_update(mean, lu.post_cov, rng, lu.chol_post)
                level_draws.append(draws)
                if config.validate_draws and sweep >= config.warmup:
                    gap = min_psd_eigenvalue(var_resid - lu.post_cov)
                    scale = max(np.trace(var_resid) / n, 1e-30)
                    if gap < -1e-8 * scale:
                        raise AssertionError(
                            f"level {lev}: adjusted covariance exceeds the prior ({gap:.3e})"
                        )

            # combination: shared weights over the active levels
            trace.append("combination")
            if k:
                targets, design = assemble_design(
                    fitted_updates, S_sel, r_nodes[:, selected]
                )
                w = sample_weights(design, targets, comb, rng)
                Hprec = sample_error_precision(
                    design, targets, w, S_sel @ var_resid @ S_sel.T, rng
                )
                comb = replace(comb, weights=w, error_precision=Hprec)
                path = combine(prior_path, level_draws, w, S)
            else:
                w = np.zeros(0)
                path = prior_path @ S.T

            sweep_trace.append(tuple(trace))
            keep = sweep >= config.warmup and (sweep - config.warmup) % config.thin == 0
            if keep:
                if config.validate_draws:
                    _validate_draw(path, S, cal.rho, w, k)
                paths[chain, kept_i] = path
                rho_tr[chain, kept_i] = cal.rho
                rho0_tr[chain, kept_i] = cal.rho0
                w_tr[chain, kept_i] = w
                score_tr[chain, kept_i] = scores
                kept_i += 1

    rhat_values = _diagnostics(rho0_tr, w_tr, rho_tr, paths)
    return PosteriorSamples(
        paths=paths,
        rho=rho_tr,
        rho0=rho0_tr,
        weights=w_tr,
        factor_scores=score_tr,
        node_ids=list(h.node_ids),
        active_levels=active_levels,
        level_names=list(h.level_names),
        selected_rows=selected,
        rhat_values=rhat_values,
        sweep_trace=sweep_trace,
        config=config,
    )


def _validate_draw(path, S, rho, weights, k):
    atomic = path[:, -S.shape[1] :]
    recon = atomic @ S.T
    scale = max(np.max(np.abs(path)), 1.0)
    if np.max(np.abs(recon - path)) > 1e-10 * scale:
        raise AssertionError("posterior draw is not coherent")
    if np.any((rho < 0) | (rho > 1)):
        raise AssertionError("calibration coefficient outside [0, 1]")
    if k and abs(weights.sum() - 1.0) > 1e-4:
        raise AssertionError("combination weights do not sum to one")


def _diagnostics(rho0_tr, w_tr, rho_tr, paths):
    """Split-rhat for the global coefficient, each weight, a deterministic
    subsample of per-node coefficients, and one forecast coordinate."""
    out = {}
    if rho0_tr.shape[1] >= 4:
        out["rho0"] = rhat(rho0_tr)
        for j in range(w_tr.shape[2]):
            out[f"weight_{j}"] = rhat(w_tr[:, :, j])
        m = rho_tr.shape[2]
        for i in sorted(set(np.linspace(0, m - 1, num=min(5, m), dtype=int))):
            out[f"rho_{i}"] = rhat(rho_tr[:, :, i])
        out["path_h1_top"] = rhat(paths[:, :, 0, 0])
    return out
