"""Data preparation, validation and scoring for one-day-ahead forecasting."""
from .data import Series, TimeSeriesDataset, fill_short_gaps, join_weather, resample_hourly
from .features import DesignMatrix, build_design_matrix
from .forecasters import MODEL_KINDS, Forecaster, basis_count, make_forecaster
from .lcurve import LCurveResult, greedy_lcurve, lcurve_tune, menger_curvature
from .metrics import MetricsReport, compute_metrics
from .validation import CVResult, kfold_cv, kfold_indices, split_half
