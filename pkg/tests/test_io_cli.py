"""File formats and the command-line surface."""

import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from hfbayes import dataio
from hfbayes.hierarchy import build_hierarchy
from hfbayes.panel import Panel

from test_hierarchy import toy_spec


def write(path, text):
    Path(path).write_text(text)
    return str(path)


def test_load_panel_toy(tmp_path):
    p = write(tmp_path / "p.csv", "date,x,y\n2001-01,1.5,2\n2001-02,3,4\n")
    panel = dataio.load_panel(p)
    assert panel.series == ["x", "y"]
    assert panel.index == ["2001-01", "2001-02"]
    assert np.allclose(panel.values, [[1.5, 2.0], [3.0, 4.0]])


def test_load_panel_missing_cell(tmp_path):
    p = write(tmp_path / "p.csv", "date,x,y\n2001-01,1,\n2001-02,3,4\n")
    panel = dataio.load_panel(p)
    assert np.isnan(panel.values[0, 1])
    assert panel.has_missing()


def test_load_panel_duplicate_date(tmp_path):
    p = write(tmp_path / "p.csv", "date,x\n2001-01,1\n2001-01,2\n")
    with pytest.raises(ValueError, match="duplicate date"):
        dataio.load_panel(p)


def test_load_panel_ragged_row(tmp_path):
    p = write(tmp_path / "p.csv", "date,x,y\n2001-01,1\n")
    with pytest.raises(ValueError, match="ragged"):
        dataio.load_panel(p)


def test_load_panel_bad_date(tmp_path):
    p = write(tmp_path / "p.csv", "date,x\nJan-2001,1\n")
    with pytest.raises(ValueError, match="unparseable date"):
        dataio.load_panel(p)


def test_panel_round_trip(tmp_path):
    values = np.array([[1.0, np.nan], [2.5, -3.0]])
    panel = Panel(values, ["a", "b"], ["2010-11", "2010-12"])
    path = tmp_path / "rt.csv"
    dataio.write_panel(path, panel)
    back = dataio.load_panel(path)
    assert back.series == panel.series
    assert back.index == panel.index
    assert np.array_equal(np.isnan(back.values), np.isnan(values))
    assert np.array_equal(back.values[~np.isnan(values)], values[~np.isnan(values)])


def test_month_range_wraps_year():
    assert dataio.month_range("2001-11", 3) == ["2001-11", "2001-12", "2002-01"]


def test_hierarchy_json_round_trip(tmp_path):
    spec = toy_spec()
    path = tmp_path / "h.json"
    dataio.write_hierarchy(path, spec)
    h = dataio.load_hierarchy(path)
    assert h.node_ids == ["Total", "A", "B"]
    raw = json.loads(path.read_text())
    assert set(raw) == {"atomic", "levels", "factor_levels"}


def test_load_base_forecasts(tmp_path):
    h = build_hierarchy(toy_spec())
    p = write(
        tmp_path / "f.csv",
        "origin,horizon,series_id,value\n"
        "2001-01,1,Total,10\n2001-01,2,Total,11\n2001-01,1,A,4\n",
    )
    store = dataio.load_base_forecasts(p, h)
    assert len(store) == 3
    assert store.get("2001-01", 1, "Total") == 10.0
    assert np.isnan(store.get("2001-01", 1, "B"))  # atomic level partly absent


def test_load_base_forecasts_duplicate_key(tmp_path):
    h = build_hierarchy(toy_spec())
    p = write(
        tmp_path / "f.csv",
        "origin,horizon,series_id,value\n2001-01,1,Total,10\n2001-01,1,Total,11\n",
    )
    with pytest.raises(ValueError, match="duplicate"):
        dataio.load_base_forecasts(p, h)


def test_load_base_forecasts_unknown_series(tmp_path):
    h = build_hierarchy(toy_spec())
    p = write(tmp_path / "f.csv", "origin,horizon,series_id,value\n2001-01,1,Z,10\n")
    with pytest.raises(ValueError, match="unknown series"):
        dataio.load_base_forecasts(p, h)


def test_align_base_forecasts(tmp_path):
    h = build_hierarchy(toy_spec())
    panel = Panel(np.ones((3, 2)), ["A", "B"], ["2001-01", "2001-02", "2001-03"])
    store = dataio.ForecastStore()
    store.add("2001-01", 1, "Total", 9.0)  # lands at in-sample row 2001-02
    store.add("2001-03", 2, "A", 5.0)
    aligned = dataio.align_base_forecasts(store, h, panel, origin_pos=2, horizon=2)
    assert aligned.insample.shape == (3, 3)
    assert aligned.insample[1, 0] == 9.0
    assert np.isnan(aligned.insample[0]).all()
    assert aligned.future[1, 1] == 5.0
    assert np.isnan(aligned.future[0]).all()


def test_store_to_positional():
    h = build_hierarchy(toy_spec())
    store = dataio.ForecastStore()
    store.add("2001-02", 1, "Total", 7.0)
    out = dataio.store_to_positional(store, h, ["2001-01", "2001-02"])
    assert (1, 1) in out
    assert out[(1, 1)][0] == 7.0
    assert np.isnan(out[(1, 1)][1:]).all()


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "hfbayes.cli", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
    )


FAST = [
    "--warmup", "10", "--samples", "12", "--thin", "2",
    "--horizon", "3", "--seasonal-period", "0",
]


def simulate_args(outdir):
    return [
        "simulate", "--seed", "1", "--periods", "36", "--atomics", "4",
        "--window", "28", "--output", outdir, *FAST,
    ]


def test_cli_simulate_deterministic(tmp_path):
    r1 = run_cli(simulate_args("s1"), tmp_path)
    r2 = run_cli(simulate_args("s2"), tmp_path)
    assert r1.returncode == 0 and r2.returncode == 0, r1.stderr + r2.stderr
    for name in ["panel.csv", "hierarchy.json", "base_forecasts.csv", "truth.json"]:
        a = (tmp_path / "s1" / name).read_bytes()
        b = (tmp_path / "s2" / name).read_bytes()
        assert a == b, f"{name} differs between identical seeds"


def test_cli_reconcile_outputs(tmp_path):
    assert run_cli(simulate_args("sim"), tmp_path).returncode == 0
    res = run_cli(
        [
            "reconcile",
            "--panel", "sim/panel.csv",
            "--hierarchy", "sim/hierarchy.json",
            "--base-forecasts", "sim/base_forecasts.csv",
            "--seed", "3", "--output", "rec", *FAST,
        ],
        tmp_path,
    )
    assert res.returncode == 0, res.stderr
    out = tmp_path / "rec"
    for name in ["posterior_samples.csv", "rho.csv", "weights.csv", "diagnostics.json"]:
        assert (out / name).exists()
    with open(out / "posterior_samples.csv") as fh:
        draws = {int(row["draw"]) for row in csv.DictReader(fh)}
    assert len(draws) == 6  # samples / thin
    diag = json.loads((out / "diagnostics.json").read_text())
    assert diag["seed"] == 3
    assert "runtime_seconds" in diag and "rhat" in diag


def test_cli_evaluate_metrics(tmp_path):
    assert run_cli(simulate_args("sim"), tmp_path).returncode == 0
    res = run_cli(
        [
            "evaluate",
            "--panel", "sim/panel.csv",
            "--hierarchy", "sim/hierarchy.json",
            "--base-forecasts", "sim/base_forecasts.csv",
            "--methods", "base,ols,he",
            "--window", "28", "--seed", "0", "--output", "ev", *FAST,
        ],
        tmp_path,
    )
    assert res.returncode == 0, res.stderr
    with open(tmp_path / "ev" / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    methods = {r["method"] for r in rows}
    assert methods == {"base", "ols", "he"}
    assert {r["metric"] for r in rows} == {"r2", "energy_score"}
    levels = {r["level"] for r in rows}
    assert {"all", "total", "group", "atomic"} <= levels


def test_cli_baseline(tmp_path):
    assert run_cli(simulate_args("sim"), tmp_path).returncode == 0
    res = run_cli(
        [
            "baseline",
            "--hierarchy", "sim/hierarchy.json",
            "--base-forecasts", "sim/base_forecasts.csv",
            "--output", "bl",
        ],
        tmp_path,
    )
    assert res.returncode == 0, res.stderr
    with open(tmp_path / "bl" / "baseline_forecasts.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows and set(rows[0]) == {"origin", "horizon", "series_id", "value"}


def test_cli_unknown_flag_fails(tmp_path):
    res = run_cli(["simulate", "--not-a-flag"], tmp_path)
    assert res.returncode != 0
    assert res.stderr


def test_cli_missing_input_reports_error(tmp_path):
    res = run_cli(
        [
            "reconcile", "--panel", "nope.csv", "--hierarchy", "nope.json",
            "--base-forecasts", "nope.csv", *FAST,
        ],
        tmp_path,
    )
    assert res.returncode == 1
    assert "error:" in res.stderr
