"""Build a grouped hierarchy and aggregate an atomic panel through it.

A collection is described by its atomic series plus one label per series
per grouping dimension. Every node (total, each group, each atomic series)
is a row of the summing matrix.
"""

import numpy as np

from hfbayes import aggregate, build_hierarchy, level_selector, summing_matrix

spec = {
    "atomic": ["nsw_hol", "nsw_bus", "vic_hol", "vic_bus"],
    "levels": [
        {"name": "total", "labels": {s: "Australia" for s in ["nsw_hol", "nsw_bus", "vic_hol", "vic_bus"]}},
        {"name": "state", "labels": {"nsw_hol": "NSW", "nsw_bus": "NSW", "vic_hol": "VIC", "vic_bus": "VIC"}},
        {"name": "purpose", "labels": {"nsw_hol": "Holiday", "nsw_bus": "Business", "vic_hol": "Holiday", "vic_bus": "Business"}},
    ],
    "factor_levels": ["total", "state"],
}

h = build_hierarchy(spec)
print(f"{h.num_atomic} atomic series, {h.num_nodes} nodes, {h.num_levels} levels")
print("node order:", h.node_ids)

S = summing_matrix(h)
print("\nsumming matrix:")
print(S.astype(int))

rng = np.random.default_rng(0)
panel = 100 + rng.normal(size=(6, 4)).cumsum(axis=0)
full = aggregate(h, panel)
print("\nlast row aggregated:", full[-1].round(1))
print("total equals NSW + VIC:", np.isclose(full[-1, 0], full[-1, 1] + full[-1, 2]))

print("\nstate-level selector rows:")
print(level_selector(h, h.level_index("state")).astype(int))
print("factors carried by levels:", [h.level_names[j] for j in h.factor_levels],
      "->", h.num_factors, "factors")
