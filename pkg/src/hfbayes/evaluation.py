"""Baselines, forecast scores and the rolling-origin evaluation harness.

Implements the passthrough and least-squares-projection baselines, the
out-of-sample R-squared against a seasonal-mean benchmark, the energy score
for sample-based forecast distributions, and a harness that scores any mix
of methods per hierarchy level and horizon.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ._linalg import nan_column_mean
from .gibbs import AlignedBaseForecasts, GibbsConfig, run_reconciliation
from .hierarchy import summing_matrix

ENUMERATION_LIMIT = 2000  # exact pairwise scoring up to this many draws
RESAMPLED_PAIRS = 10_000


def ols_reconcile(base_forecast, S):
    """Project a forecast vector onto the column space of the summing matrix.

    Solves the identity-weighted least squares problem, so coherent inputs
    pass through unchanged and the operation is idempotent. ``base_forecast``
    may be a vector (m,) or a stack (..., m).
    """
    S = np.asarray(S, float)
    yhat = np.asarray(base_forecast, float)
    gram = S.T @ S
    if np.linalg.matrix_rank(gram) < S.shape[1]:
        raise ValueError("summing matrix is rank deficient")
    coefs = np.linalg.solve(gram, yhat @ S)
    return coefs @ S.T


def oos_r2(forecasts, actuals, seasonal_mean_values):
    """Out-of-sample R-squared against the seasonal-mean benchmark.

    One minus the squared-error ratio of the forecasts to the benchmark;
    negative when the forecasts do worse than the benchmark.
    """
    x = np.asarray(actuals, float).ravel()
    xh = np.asarray(forecasts, float).ravel()
    xb = np.asarray(seasonal_mean_values, float).ravel()
    if x.size == 0:
        raise ValueError("no observations to score")
    denom = np.sum((x - xb) ** 2)
    if denom <= 0:
        raise ValueError("benchmark has zero error; R2 undefined")
    return 1.0 - np.sum((x - xh) ** 2) / denom


def energy_score(samples, realization, alpha=1.0, rng=None):
    """Energy score of a sample-based forecast distribution.

    Mean distance from the draws to the realization minus half the mean
    pairwise distance between two independent resamples. Up to
    ``ENUMERATION_LIMIT`` draws all with-replacement pairs are enumerated
    exactly; beyond that the pair term uses resampled pairs (``rng``
    required).
    """
    Y = np.atleast_2d(np.asarray(samples, float))
    y = np.atleast_1d(np.asarray(realization, float))
    if Y.shape[0] == 0:
        raise ValueError("empty sample set")
    if Y.shape[1] != y.shape[0]:
        raise ValueError(f"samples have dimension {Y.shape[1]}, realization {y.shape[0]}")
    dist_to_y = np.linalg.norm(Y - y[None, :], axis=1) ** alpha
    term1 = dist_to_y.mean()
    nd = Y.shape[0]
    if nd <= ENUMERATION_LIMIT:
        acc = 0.0
        chunk = max(1, int(2**22 // max(nd, 1)))
        for start in range(0, nd, chunk):
            block = Y[start : start + chunk]
            d = np.linalg.norm(block[:, None, :] - Y[None, :, :], axis=2) ** alpha
            acc += d.sum()
        term2 = acc / (nd * nd)
    else:
        if rng is None:
            raise ValueError("rng required for resampled pair scoring")
        i = rng.integers(0, nd, size=RESAMPLED_PAIRS)
        j = rng.integers(0, nd, size=RESAMPLED_PAIRS)
        term2 = (np.linalg.norm(Y[i] - Y[j], axis=1) ** alpha).mean()
    return float(term1 - 0.5 * term2)


def seasonal_means(window_values, window_positions, target_position):
    """Per-calendar-position in-window mean (column-wise when 2-D)."""
    window_values = np.asarray(window_values, float)
    sel = np.asarray(window_positions) == target_position
    if not sel.any():
        sel = np.ones(len(window_positions), dtype=bool)
    return nan_column_mean(window_values[sel])


@dataclass
class MetricReport:
    """Flat metric rows: (method, level, purpose_split, horizon, metric, value)."""

    rows: list = field(default_factory=list)

    def add(self, method, level, horizon, metric, value, purpose_split=""):
        self.rows.append(
            {
                "method": method,
                "level": level,
                "purpose_split": purpose_split,
                "horizon": str(horizon),
                "metric": metric,
                "value": float(value),
            }
        )

    def value(self, method, level, horizon, metric):
        for row in self.rows:
            if (
                row["method"] == method
                and row["level"] == level
                and row["horizon"] == str(horizon)
                and row["metric"] == metric
            ):
                return row["value"]
        raise KeyError((method, level, horizon, metric))


def _horizon_bands(max_h):
    bands = [(str(hh), [hh]) for hh in range(1, max_h + 1)]
    if max_h >= 6:
        bands.append(("1-6", list(range(1, 7))))
    if max_h >= 12:
        bands.append(("1-12", list(range(1, 13))))
    return bands


def default_origin_config():
    """Sampler settings sized for repeated per-origin fits."""
    return GibbsConfig(warmup=100, samples=200, thin=2)


def _run_at_origin(cfg, hierarchy, obs, store, origin, window_len, horizons):
    """Fit the sampler on the trailing window ending at ``origin``.

    In-sample base values are the stored one-step forecasts from earlier
    origins; the out-of-sample grid comes from the origin itself.
    """
    start = max(0, origin - window_len + 1)
    window = obs[start : origin + 1]
    Tw = window.shape[0]
    m = hierarchy.num_nodes
    ins = np.full((Tw, m), np.nan)
    for t_local in range(1, Tw):
        key = (start + t_local - 1, 1)
        if key in store:
            ins[t_local] = store[key]
    fut = np.full((horizons, m), np.nan)
    for hh in range(1, horizons + 1):
        if (origin, hh) in store:
            fut[hh - 1] = store[(origin, hh)]
    cfg = replace(cfg, horizon=horizons)
    aligned = AlignedBaseForecasts(insample=ins, future=fut)
    return run_reconciliation(cfg, hierarchy, window, aligned)


def rolling_evaluate(
    methods,
    panel_values,
    hierarchy,
    store,
    window_len,
    horizons,
    seasonal_period=12,
    gibbs_config=None,
    origins=None,
):
    """Score methods over rolling origins.

    ``store`` maps (origin_position, horizon) to an (m,) vector of base
    forecasts (NaN marks absent nodes). Each origin fits on its trailing
    window and is scored out of sample per level and horizon; horizon bands
    pool errors. Returns (MetricReport, per-origin whole-collection energy
    scores keyed by method).
    """
    obs = np.asarray(panel_values, float)
    T = obs.shape[0]
    S = summing_matrix(hierarchy)
    node_values = obs @ S.T
    positions = np.arange(T) % seasonal_period if seasonal_period else np.zeros(T, int)

    if origins is None:
        origins = list(range(window_len - 1, T - 1))
    if not origins:
        raise ValueError("no origins: panel too short for the window")

    point = {meth: {} for meth in methods}
    draw_sets = {meth: {} for meth in methods}

    for origin in origins:
        avail_h = [
            hh
            for hh in range(1, horizons + 1)
            if origin + hh < T and (origin, hh) in store
        ]
        if not avail_h:
            continue
        for meth in methods:
            if meth == "base":
                for hh in avail_h:
                    point[meth].setdefault(origin, {})[hh] = store[(origin, hh)]
            elif meth == "ols":
                for hh in avail_h:
                    yhat = store[(origin, hh)]
                    if np.isnan(yhat).any():
                        raise ValueError(
                            "least-squares reconciliation needs forecasts for every node"
                        )
                    point[meth].setdefault(origin, {})[hh] = ols_reconcile(yhat, S)
            elif meth == "he":
                cfg = gibbs_config or default_origin_config()
                res = _run_at_origin(cfg, hierarchy, obs, store, origin, window_len, horizons)
                flat = res.flat_paths()
                for hh in avail_h:
                    point[meth].setdefault(origin, {})[hh] = flat[:, hh - 1, :].mean(axis=0)
                    draw_sets[meth].setdefault(origin, {})[hh] = flat[:, hh - 1, :]
            else:
                raise ValueError(f"unknown method {meth!r}")

    def samples_for(meth, origin, hh):
        if origin in draw_sets[meth] and hh in draw_sets[meth][origin]:
            return draw_sets[meth][origin][hh]
        return point[meth][origin][hh][None, :]

    report = MetricReport()
    bands = _horizon_bands(horizons)
    level_sets = [
        (hierarchy.level_names[j], hierarchy.level_rows(j))
        for j in range(hierarchy.num_levels)
    ]

    for meth in methods:
        for label, hs in bands:
            es_all = []
            for origin in origins:
                for hh in hs:
                    if origin not in point[meth] or hh not in point[meth][origin]:
                        continue
                    actual = node_values[origin + hh]
                    sample_set = samples_for(meth, origin, hh)
                    keep = np.isfinite(sample_set).all(axis=0) & np.isfinite(actual)
                    if keep.any():
                        es_all.append(energy_score(sample_set[:, keep], actual[keep]))
            if es_all:
                report.add(meth, "all", label, "energy_score", float(np.mean(es_all)))

            for level_name, rows in level_sets:
                num = 0.0
                den = 0.0
                es_level = []
                for origin in origins:
                    if origin not in point[meth]:
                        continue
                    win = slice(origin - window_len + 1, origin + 1)
                    for hh in hs:
                        if hh not in point[meth][origin]:
                            continue
                        t_target = origin + hh
                        actual = node_values[t_target, rows]
                        fc = point[meth][origin][hh][rows]
                        bench = seasonal_means(
                            node_values[win][:, rows],
                            positions[win],
                            positions[t_target],
                        )
                        ok = np.isfinite(actual) & np.isfinite(fc) & np.isfinite(bench)
                        num += np.sum((actual[ok] - fc[ok]) ** 2)
                        den += np.sum((actual[ok] - bench[ok]) ** 2)
                        level_samples = samples_for(meth, origin, hh)[:, rows]
                        if ok.any():
                            es_level.append(energy_score(level_samples[:, ok], actual[ok]))
                if den > 0:
                    report.add(meth, level_name, label, "r2", 1.0 - num / den)
                if es_level:
                    report.add(
                        meth, level_name, label, "energy_score", float(np.mean(es_level))
                    )

    per_origin_es = {meth: {} for meth in methods}
    for meth in methods:
        for origin in origins:
            if origin not in point[meth]:
                continue
            vals = []
            for hh in point[meth][origin]:
                actual = node_values[origin + hh]
                sample_set = samples_for(meth, origin, hh)
                keep = np.isfinite(sample_set).all(axis=0) & np.isfinite(actual)
                if keep.any():
                    vals.append(energy_score(sample_set[:, keep], actual[keep]))
            if vals:
                per_origin_es[meth][origin] = float(np.mean(vals))

    return report, per_origin_es
