"""Command-line surface: reconcile, evaluate, simulate, baseline."""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import dataio
from .evaluation import ols_reconcile, rolling_evaluate
from .gibbs import GibbsConfig, run_reconciliation
from .hierarchy import build_hierarchy, summing_matrix
from .simulate import SimSpec, simulate_dataset


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--warmup", type=int, default=1000)
    parser.add_argument("--samples", type=int, default=2000)
    parser.add_argument("--thin", type=int, default=2)
    parser.add_argument("--discount", type=float, default=0.995)
    parser.add_argument("--horizon", type=int, default=12)
    parser.add_argument("--window", type=int, default=96)
    parser.add_argument("--seasonal-period", type=int, default=12)
    parser.add_argument("--factor-levels", type=str, default=None,
                        help="comma-separated level names carrying factors")
    parser.add_argument("--combination-series", type=str, default=None,
                        help="comma-separated node ids fitted in the combination")
    parser.add_argument("--output", type=str, default=".")


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hfbayes",
        description="Probabilistic reconciliation of hierarchical forecasts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconcile", help="sample coherent forecasts at the panel's last origin")
    p.add_argument("--panel", required=True)
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--base-forecasts", required=True)
    p.add_argument("--chains", type=int, default=1)
    _add_common(p)

    p = sub.add_parser("evaluate", help="rolling-origin comparison of methods")
    p.add_argument("--panel", required=True)
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--base-forecasts", required=True)
    p.add_argument("--methods", type=str, default="base,ols,he")
    _add_common(p)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--periods", type=int, default=96)
    p.add_argument("--atomics", type=int, default=8)
    _add_common(p)

    p = sub.add_parser("baseline", help="least-squares reconciled point forecasts")
    p.add_argument("--hierarchy", required=True)
    p.add_argument("--base-forecasts", required=True)
    p.add_argument("--origin", type=str, default=None,
                   help="origin label to reconcile (default: every origin in the file)")
    _add_common(p)
    return parser


def _gibbs_config(args, chains=1):
    factor_levels = args.factor_levels.split(",") if args.factor_levels else None
    comb = args.combination_series.split(",") if args.combination_series else None
    return GibbsConfig(
        warmup=args.warmup,
        samples=args.samples,
        thin=args.thin,
        chains=chains,
        seed=args.seed,
        discount=args.discount,
        horizon=args.horizon,
        seasonal_period=args.seasonal_period,
        factor_levels=factor_levels,
        combination_series=comb,
    )


def _cmd_reconcile(args):
    started = time.perf_counter()
    panel = dataio.load_panel(args.panel)
    hierarchy = dataio.load_hierarchy(args.hierarchy)
    store = dataio.load_base_forecasts(args.base_forecasts, hierarchy)
    origin_pos = panel.num_periods - 1
    atomic_cols = [panel.series.index(sid) for sid in hierarchy.atomic_ids]
    atomic = panel.values[:, atomic_cols]
    aligned = dataio.align_base_forecasts(store, hierarchy, panel, origin_pos, args.horizon)
    cfg = _gibbs_config(args, chains=args.chains)
    result = run_reconciliation(cfg, hierarchy, atomic, aligned)
    os.makedirs(args.output, exist_ok=True)
    dataio.write_posterior_samples(
        os.path.join(args.output, "posterior_samples.csv"), result, hierarchy
    )
    dataio.write_rho(os.path.join(args.output, "rho.csv"), result)
    dataio.write_weights(os.path.join(args.output, "weights.csv"), result)
    dataio.write_diagnostics(
        os.path.join(args.output, "diagnostics.json"),
        result,
        args.seed,
        time.perf_counter() - started,
        extra={"origin": panel.index[origin_pos]},
    )
    return 0


def _cmd_evaluate(args):
    started = time.perf_counter()
    panel = dataio.load_panel(args.panel)
    hierarchy = dataio.load_hierarchy(args.hierarchy)
    store = dataio.load_base_forecasts(args.base_forecasts, hierarchy)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    atomic_cols = [panel.series.index(sid) for sid in hierarchy.atomic_ids]
    atomic = panel.values[:, atomic_cols]
    positional = dataio.store_to_positional(store, hierarchy, panel.index)
    cfg = _gibbs_config(args)
    report, _ = rolling_evaluate(
        methods,
        atomic,
        hierarchy,
        positional,
        window_len=args.window,
        horizons=args.horizon,
        seasonal_period=args.seasonal_period,
        gibbs_config=cfg,
    )
    os.makedirs(args.output, exist_ok=True)
    dataio.write_metrics(os.path.join(args.output, "metrics.csv"), report)
    n_origins = max(len({k[0] for k in positional}), 1)
    with open(os.path.join(args.output, "evaluate_timings.json"), "w") as fh:
        elapsed = time.perf_counter() - started
        json.dump(
            {"runtime_seconds": elapsed, "seconds_per_origin": elapsed / n_origins},
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return 0


def _simulation_spec(args):
    """Two-group hierarchy with a total level; truth sized from the flags."""
    n = args.atomics
    if n < 2:
        raise ValueError("need at least 2 atomic series")
    ids = [f"s{i:02d}" for i in range(n)]
    groups = {sid: ("g1" if i < n // 2 else "g2") for i, sid in enumerate(ids)}
    hier_spec = {
        "atomic": ids,
        "levels": [
            {"name": "total", "labels": {sid: "total" for sid in ids}},
            {"name": "group", "labels": groups},
        ],
        "factor_levels": ["total", "group"],
    }
    hierarchy = build_hierarchy(hier_spec)
    m = hierarchy.num_nodes
    loadings = np.ones((n, 1)) * 3.0
    rho = np.full(m, 0.5)
    rho[0] = 0.7
    spec = SimSpec(
        hierarchy_spec=hier_spec,
        num_periods=args.periods,
        loadings=loadings,
        factor_cov=np.eye(1),
        idio_var=np.full(n, 4.0),
        rho=rho,
        level_means=50.0 + 10.0 * np.arange(n, dtype=float),
        seasonal_period=args.seasonal_period,
        seasonal_amplitude=5.0 if args.seasonal_period else 0.0,
        state_noise_sd=0.0,
        seed=args.seed,
    )
    return hier_spec, spec


def _cmd_simulate(args):
    hier_spec, spec = _simulation_spec(args)
    data = simulate_dataset(spec, horizon=args.horizon, first_origin=args.window - 1)
    os.makedirs(args.output, exist_ok=True)
    labels = dataio.month_range("2000-01", spec.num_periods)
    from .panel import Panel

    panel = Panel(data.panel_values, list(data.hierarchy.atomic_ids), labels)
    dataio.write_panel(os.path.join(args.output, "panel.csv"), panel)
    dataio.write_hierarchy(os.path.join(args.output, "hierarchy.json"), hier_spec)

    all_labels = dataio.month_range("2000-01", spec.num_periods + args.horizon)
    ids = data.hierarchy.node_ids
    rows = []
    for (origin_pos, horizon), vec in sorted(data.store.items()):
        if origin_pos >= len(labels):
            continue
        for i, sid in enumerate(ids):
            if np.isfinite(vec[i]):
                rows.append((labels[origin_pos], horizon, sid, vec[i]))
    dataio.write_base_forecasts(os.path.join(args.output, "base_forecasts.csv"), rows)

    truth = {
        "rho": {sid: (None if not np.isfinite(r) else float(r))
                for sid, r in zip(ids, spec.rho)},
        "level_means": [float(v) for v in spec.level_means],
        "idio_var": [float(v) for v in spec.idio_var],
        "seed": spec.seed,
        "future_dates": all_labels[spec.num_periods:],
    }
    with open(os.path.join(args.output, "truth.json"), "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")

    future_panel = Panel(
        data.future_values, list(data.hierarchy.atomic_ids), all_labels[spec.num_periods:]
    )
    dataio.write_panel(os.path.join(args.output, "future_actuals.csv"), future_panel)
    return 0


def _cmd_baseline(args):
    hierarchy = dataio.load_hierarchy(args.hierarchy)
    store = dataio.load_base_forecasts(args.base_forecasts, hierarchy)
    S = summing_matrix(hierarchy)
    ids = hierarchy.node_ids
    origins = [args.origin] if args.origin else store.origins()
    rows = []
    for origin in origins:
        horizons = sorted({k[1] for k in store.data if k[0] == origin})
        for hh in horizons:
            yhat = np.array([store.get(origin, hh, sid) for sid in ids])
            if np.isnan(yhat).any():
                raise ValueError(
                    f"origin {origin} horizon {hh}: forecasts missing for some nodes"
                )
            recon = ols_reconcile(yhat, S)
            for sid, val in zip(ids, recon):
                rows.append((origin, hh, sid, val))
    os.makedirs(args.output, exist_ok=True)
    dataio.write_base_forecasts(
        os.path.join(args.output, "baseline_forecasts.csv"), rows
    )
    return 0


_COMMANDS = {
    "reconcile": _cmd_reconcile,
    "evaluate": _cmd_evaluate,
    "simulate": _cmd_simulate,
    "baseline": _cmd_baseline,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (ValueError, KeyError, OSError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
