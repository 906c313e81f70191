"""Grouped time-series structure: nodes, levels and the summing matrix."""

from dataclasses import dataclass

import numpy as np

from .panel import Panel

ATOMIC_LEVEL = "atomic"


@dataclass(frozen=True)
class Node:
    """One series of the collection: an aggregate or an atomic series."""

    node_id: str
    level: int
    members: tuple  # atomic column positions this node sums over


@dataclass(frozen=True)
class Hierarchy:
    """Static description of a grouped collection of time series.

    Nodes are ordered level-major with the atomic identity block last, so the
    summing matrix rows follow ``nodes``. Each grouping dimension is one
    level; every atomic series carries exactly one label per level, so the
    rows of any level sum the atomic vector without double counting.
    ``factor_levels`` lists the level indices whose nodes carry latent
    factors in the covariance model.
    """

    atomic_ids: tuple
    nodes: tuple
    level_names: tuple  # includes the trailing atomic level
    level_ranges: tuple  # (start, stop) node-row range per level
    factor_levels: tuple  # indices into level_names

    @property
    def num_atomic(self):
        return len(self.atomic_ids)

    @property
    def num_nodes(self):
        return len(self.nodes)

    @property
    def num_levels(self):
        return len(self.level_names)

    @property
    def node_ids(self):
        return [nd.node_id for nd in self.nodes]

    @property
    def atomic_level(self):
        return self.num_levels - 1

    @property
    def factor_node_rows(self):
        """Node row indices carrying factors, level-major order."""
        rows = []
        for lev in self.factor_levels:
            start, stop = self.level_ranges[lev]
            rows.extend(range(start, stop))
        return rows

    @property
    def num_factors(self):
        return len(self.factor_node_rows)

    def factor_block_sizes(self):
        """Number of factor nodes per factor level (covariance block sizes)."""
        return tuple(
            self.level_ranges[lev][1] - self.level_ranges[lev][0]
            for lev in self.factor_levels
        )

    def level_rows(self, level_index):
        if not 0 <= level_index < self.num_levels:
            raise IndexError(f"level index {level_index} out of range")
        start, stop = self.level_ranges[level_index]
        return list(range(start, stop))

    def level_index(self, name):
        try:
            return self.level_names.index(name)
        except ValueError:
            raise KeyError(f"unknown level {name!r}") from None

    def node_row(self, node_id):
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise KeyError(f"unknown node {node_id!r}") from None


def build_hierarchy(spec):
    """Build a Hierarchy from a grouping description.

    ``spec`` is a mapping with keys:
      - "atomic": list of atomic series ids;
      - "levels": list of {"name": str, "labels": {atomic_id: label}} for the
        aggregate grouping dimensions (may be empty);
      - "factor_levels": optional list of level names carrying factors
        (defaults to all aggregate levels, or the atomic level if none).

    Nodes within a level are deduplicated by label and ordered
    lexicographically; levels keep their declared order with the atomic
    level appended last.
    """
    if not spec or not spec.get("atomic"):
        raise ValueError("empty hierarchy spec: no atomic series")
    atomic_ids = list(spec["atomic"])
    if len(set(atomic_ids)) != len(atomic_ids):
        raise ValueError("duplicate atomic series ids")
    n = len(atomic_ids)
    positions = {sid: i for i, sid in enumerate(atomic_ids)}

    level_specs = spec.get("levels", []) or []
    level_names = []
    nodes = []
    level_ranges = []
    seen_ids = set(atomic_ids)
    for lev_idx, lev in enumerate(level_specs):
        name = lev.get("name")
        if not name:
            raise ValueError("level without a name")
        if name == ATOMIC_LEVEL:
            raise ValueError(f"level name {ATOMIC_LEVEL!r} is reserved")
        if name in level_names:
            raise ValueError(f"duplicate level name {name!r}")
        labels = lev.get("labels", {})
        unknown = set(labels) - set(atomic_ids)
        if unknown:
            raise ValueError(f"level {name!r} labels unknown series {sorted(unknown)}")
        missing = [sid for sid in atomic_ids if sid not in labels]
        if missing:
            raise ValueError(f"series {missing[0]!r} has no label for level {name!r}")
        groups = {}
        for sid in atomic_ids:
            groups.setdefault(str(labels[sid]), []).append(positions[sid])
        start = len(nodes)
        for label in sorted(groups):
            if label in seen_ids:
                raise ValueError(f"node id {label!r} appears more than once")
            seen_ids.add(label)
            nodes.append(Node(label, lev_idx, tuple(groups[label])))
        level_names.append(name)
        level_ranges.append((start, len(nodes)))

    # atomic identity level, always last
    start = len(nodes)
    for i, sid in enumerate(atomic_ids):
        nodes.append(Node(sid, len(level_names), (i,)))
    level_names.append(ATOMIC_LEVEL)
    level_ranges.append((start, len(nodes)))

    wanted = spec.get("factor_levels")
    if wanted is None:
        wanted = [lv["name"] for lv in level_specs] or [ATOMIC_LEVEL]
    factor_levels = []
    for name in wanted:
        if name not in level_names:
            raise ValueError(f"factor level {name!r} is not a declared level")
        factor_levels.append(level_names.index(name))

    return Hierarchy(
        atomic_ids=tuple(atomic_ids),
        nodes=tuple(nodes),
        level_names=tuple(level_names),
        level_ranges=tuple(level_ranges),
        factor_levels=tuple(factor_levels),
    )


def summing_matrix(h):
    """Dense 0/1 matrix S (num_nodes x num_atomic); bottom block is identity."""
    S = np.zeros((h.num_nodes, h.num_atomic))
    for row, node in enumerate(h.nodes):
        S[row, list(node.members)] = 1.0
    return S


def level_selector(h, level_index):
    """The rows of S belonging to one level (m_j x n)."""
    return summing_matrix(h)[h.level_rows(level_index)]


def aggregate(h, atomic_panel):
    """Aggregate an atomic panel to all nodes: row t becomes S b_t.

    Accepts a Panel (returns a Panel over node ids) or a raw (T x n) array
    (returns an array).
    """
    if isinstance(atomic_panel, Panel):
        if atomic_panel.num_series != h.num_atomic:
            raise ValueError(
                f"panel has {atomic_panel.num_series} series, hierarchy expects {h.num_atomic}"
            )
        values = atomic_panel.values @ summing_matrix(h).T
        return Panel(values, list(h.node_ids), atomic_panel.index)
    arr = np.asarray(atomic_panel, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
        squeeze = True
    else:
        squeeze = False
    if arr.shape[1] != h.num_atomic:
        raise ValueError(
            f"array has {arr.shape[1]} columns, hierarchy expects {h.num_atomic}"
        )
    out = arr @ summing_matrix(h).T
    return out[0] if squeeze else out
