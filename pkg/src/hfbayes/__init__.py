"""Probabilistic reconciliation of hierarchical time-series forecasts.

A collection of related series is given a multivariate prior (an
exchangeable dynamic linear model aggregated through the summing matrix),
externally supplied base forecasts are calibrated against that prior, and
level-by-level moment updates are combined into coherent probabilistic
forecasts by a Gibbs sampler.
"""

from .calibration import CalibrationState, sample_calibration, standardize
from .combination import (
    CombinationState,
    assemble_design,
    combine,
    sample_error_precision,
    sample_weights,
)
from .dlm import (
    DlmSpec,
    FilterState,
    backward_sample,
    build_dlm_spec,
    forecast_prior,
    forward_filter,
    residuals,
)
from .evaluation import (
    MetricReport,
    energy_score,
    ols_reconcile,
    oos_r2,
    rolling_evaluate,
)
from .factors import (
    FactorModel,
    covariance,
    enforce_sign,
    exposure_mask,
    rotate_factors,
    sample_factors,
    sample_loadings,
)
from .gibbs import (
    AlignedBaseForecasts,
    GibbsConfig,
    PosteriorSamples,
    rhat,
    run_reconciliation,
)
from .hierarchy import (
    Hierarchy,
    aggregate,
    build_hierarchy,
    level_selector,
    summing_matrix,
)
from .panel import Panel
from .propagation import (
    LevelUpdate,
    forecast_moments,
    lbe_update,
    sample_level_update,
)
from .simulate import SimSpec, simulate_base_forecasts, simulate_dataset, simulate_panel

__version__ = "0.1.0"

__all__ = [
    "AlignedBaseForecasts",
    "CalibrationState",
    "CombinationState",
    "DlmSpec",
    "FactorModel",
    "FilterState",
    "GibbsConfig",
    "Hierarchy",
    "LevelUpdate",
    "MetricReport",
    "Panel",
    "PosteriorSamples",
    "SimSpec",
    "aggregate",
    "assemble_design",
    "backward_sample",
    "build_dlm_spec",
    "build_hierarchy",
    "combine",
    "covariance",
    "energy_score",
    "enforce_sign",
    "exposure_mask",
    "forecast_moments",
    "forecast_prior",
    "forward_filter",
    "lbe_update",
    "level_selector",
    "ols_reconcile",
    "oos_r2",
    "residuals",
    "rhat",
    "rolling_evaluate",
    "rotate_factors",
    "run_reconciliation",
    "sample_calibration",
    "sample_error_precision",
    "sample_factors",
    "sample_level_update",
    "sample_loadings",
    "sample_weights",
    "simulate_base_forecasts",
    "simulate_dataset",
    "simulate_panel",
    "standardize",
    "summing_matrix",
]
