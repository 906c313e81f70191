"""File interfaces: panels, hierarchy specs, base-forecast stores, outputs.

All tabular data is CSV; the hierarchy spec is JSON with fields "atomic",
"levels" (name plus per-series labels) and "factor_levels". Dates are ISO
months ("YYYY-MM").
"""

import csv
import json
import re
from dataclasses import dataclass, field

import numpy as np

from .hierarchy import build_hierarchy, summing_matrix
from .panel import Panel

_MONTH = re.compile(r"^(\d{4})-(\d{2})$")


def parse_month(text):
    m = _MONTH.match(text.strip())
    if not m or not 1 <= int(m.group(2)) <= 12:
        raise ValueError(f"unparseable date {text!r} (expected YYYY-MM)")
    return int(m.group(1)), int(m.group(2))


def month_range(start, count):
    """``count`` consecutive month labels beginning at ``start``."""
    year, month = parse_month(start)
    out = []
    for _ in range(count):
        out.append(f"{year:04d}-{month:02d}")
        month += 1
        if month > 12:
            month = 1
            year += 1
    return out


def load_panel(path):
    """Read a panel CSV with header ``date,<series ids...>``.

    Empty cells become NaN (missing); ragged rows, bad dates and duplicate
    dates are errors.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if not header or header[0] != "date":
            raise ValueError(f"{path}: first column must be 'date'")
        series = header[1:]
        if not series:
            raise ValueError(f"{path}: no series columns")
        dates, rows = [], []
        seen = set()
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: ragged row")
            parse_month(row[0])
            if row[0] in seen:
                raise ValueError(f"{path}:{lineno}: duplicate date {row[0]}")
            seen.add(row[0])
            dates.append(row[0])
            vals = []
            for cell in row[1:]:
                cell = cell.strip()
                vals.append(np.nan if cell == "" else float(cell))
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return Panel(np.array(rows, dtype=float), list(series), dates)


def write_panel(path, panel):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + list(panel.series))
        index = panel.index or [str(i) for i in range(panel.num_periods)]
        for label, row in zip(index, panel.values):
            writer.writerow([label] + ["" if np.isnan(v) else repr(float(v)) for v in row])


def load_hierarchy(path):
    with open(path) as fh:
        spec = json.load(fh)
    return build_hierarchy(spec)


def write_hierarchy(path, spec):
    with open(path, "w") as fh:
        json.dump(spec, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class ForecastStore:
    """Base forecasts keyed by (origin label, horizon, node id)."""

    data: dict = field(default_factory=dict)

    def add(self, origin, horizon, series_id, value):
        key = (origin, int(horizon), series_id)
        if key in self.data:
            raise ValueError(f"duplicate base forecast for {key}")
        self.data[key] = float(value)

    def get(self, origin, horizon, series_id):
        return self.data.get((origin, int(horizon), series_id), np.nan)

    def origins(self):
        return sorted({k[0] for k in self.data})

    def __len__(self):
        return len(self.data)


def load_base_forecasts(path, hierarchy):
    """Read a base-forecast CSV with columns origin,horizon,series_id,value.

    Series ids must name hierarchy nodes; combinations may be absent (levels
    without forecasts are simply skipped downstream). Duplicate keys are an
    error.
    """
    known = set(hierarchy.node_ids)
    store = ForecastStore()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"origin", "horizon", "series_id", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError(f"{path}: header must contain {sorted(required)}")
        for lineno, row in enumerate(reader, start=2):
            sid = row["series_id"]
            if sid not in known:
                raise ValueError(f"{path}:{lineno}: unknown series id {sid!r}")
            store.add(row["origin"], int(row["horizon"]), sid, float(row["value"]))
    return store


def write_base_forecasts(path, rows):
    """``rows`` iterates (origin, horizon, series_id, value)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["origin", "horizon", "series_id", "value"])
        for origin, horizon, sid, value in rows:
            writer.writerow([origin, horizon, sid, repr(float(value))])


def align_base_forecasts(store, hierarchy, panel, origin_pos, horizon):
    """Aligned arrays for a reconciliation at one origin.

    In-sample values at panel row t are the one-step forecasts issued at row
    t-1; the future grid reads (origin, horizon) entries. Requires a dated
    panel.
    """
    from .gibbs import AlignedBaseForecasts

    if panel.index is None:
        raise ValueError("panel needs a date index to align base forecasts")
    T = origin_pos + 1
    ids = hierarchy.node_ids
    m = len(ids)
    ins = np.full((T, m), np.nan)
    for t in range(1, T):
        prev = panel.index[t - 1]
        for i, sid in enumerate(ids):
            ins[t, i] = store.get(prev, 1, sid)
    fut = np.full((horizon, m), np.nan)
    origin_label = panel.index[origin_pos]
    for hh in range(1, horizon + 1):
        for i, sid in enumerate(ids):
            fut[hh - 1, i] = store.get(origin_label, hh, sid)
    return AlignedBaseForecasts(insample=ins, future=fut)


def store_to_positional(store, hierarchy, index):
    """Re-key a store by panel row position: (origin_pos, horizon) -> (m,)."""
    ids = hierarchy.node_ids
    pos = {label: i for i, label in enumerate(index)}
    out = {}
    for (origin, horizon, sid), value in store.data.items():
        if origin not in pos:
            continue
        key = (pos[origin], horizon)
        vec = out.setdefault(key, np.full(len(ids), np.nan))
        vec[ids.index(sid)] = value
    return out


def write_posterior_samples(path, result, hierarchy):
    """posterior_samples.csv: draw, horizon, series_id, value.

    Every draw is re-checked for coherence before it is written.
    """
    S = summing_matrix(hierarchy)
    n = hierarchy.num_atomic
    flat = result.flat_paths()
    ids = result.node_ids
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw", "horizon", "series_id", "value"])
        for d, path_draw in enumerate(flat):
            recon = path_draw[:, -n:] @ S.T
            scale = max(np.max(np.abs(path_draw)), 1.0)
            if np.max(np.abs(recon - path_draw)) > 1e-10 * scale:
                raise AssertionError(f"draw {d} fails the coherence re-check")
            for hh in range(path_draw.shape[0]):
                for i, sid in enumerate(ids):
                    writer.writerow([d, hh + 1, sid, repr(float(path_draw[hh, i]))])


def write_rho(path, result):
    """rho.csv: draw, series_id, value; the global coefficient rows use the
    reserved id "rho0"."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw", "series_id", "value"])
        chains, kept, m = result.rho.shape
        d = 0
        for c in range(chains):
            for k in range(kept):
                writer.writerow([d, "rho0", repr(float(result.rho0[c, k]))])
                for i, sid in enumerate(result.node_ids):
                    writer.writerow([d, sid, repr(float(result.rho[c, k, i]))])
                d += 1


def write_weights(path, result):
    """weights.csv: draw, level, value."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["draw", "level", "value"])
        chains, kept, k = result.weights.shape
        d = 0
        for c in range(chains):
            for kk in range(kept):
                for j, lev in enumerate(result.active_levels):
                    writer.writerow(
                        [d, result.level_names[lev], repr(float(result.weights[c, kk, j]))]
                    )
                d += 1


def write_diagnostics(path, result, seed, runtime_seconds, extra=None):
    payload = {
        "seed": seed,
        "chains": int(result.paths.shape[0]),
        "kept_draws": int(result.paths.shape[0] * result.paths.shape[1]),
        "rhat": {k: float(v) for k, v in sorted(result.rhat_values.items())},
        "active_levels": [result.level_names[j] for j in result.active_levels],
        "runtime_seconds": float(runtime_seconds),
    }
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_metrics(path, report):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "level", "purpose_split", "horizon", "metric", "value"])
        for row in report.rows:
            writer.writerow(
                [
                    row["method"],
                    row["level"],
                    row["purpose_split"],
                    row["horizon"],
                    row["metric"],
                    repr(row["value"]),
                ]
            )
