"""Time-indexed multi-series data container."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Panel:
    """A (T x k) real matrix with one column per series.

    NaN cells mark missing observations. ``index`` optionally carries row
    labels (ISO "YYYY-MM" strings for monthly data).
    """

    values: np.ndarray
    series: list[str]
    index: list[str] | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("panel values must be 2-dimensional (time x series)")
        if self.values.shape[1] != len(self.series):
            raise ValueError(
                f"panel has {self.values.shape[1]} columns but {len(self.series)} series ids"
            )
        if len(set(self.series)) != len(self.series):
            raise ValueError("duplicate series ids in panel")
        if self.index is not None and len(self.index) != self.values.shape[0]:
            raise ValueError("index length does not match number of rows")

    @property
    def num_periods(self):
        return self.values.shape[0]

    @property
    def num_series(self):
        return self.values.shape[1]

    def has_missing(self):
        return bool(np.isnan(self.values).any())

    def column(self, series_id):
        return self.values[:, self.series.index(series_id)]
