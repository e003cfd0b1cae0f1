"""Recurrent transform learning for short-term load forecasting."""
from .exceptions import (
    ChecksumError,
    ConfigError,
    DataError,
    DimensionError,
    InsufficientDataError,
    ModelFileError,
    ModelKindError,
    NumericalError,
    RtlError,
    VersionError,
)
from .kernels import BACKEND
from .recurrent import RtlConfig, RtlModel, build_recurrent_system, fit_rtl, infer_coefficients, solve_coefficients
from .supervised import Normalization, R2tlConfig, TrainedModel, fit_r2tl, fit_rtl_regressor, predict
from .transform import TlConfig, TlResult, fit_transform_learning, tl_objective, transform_update_closed_form

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ChecksumError",
    "ConfigError",
    "DataError",
    "DimensionError",
    "InsufficientDataError",
    "ModelFileError",
    "ModelKindError",
    "Normalization",
    "NumericalError",
    "R2tlConfig",
    "RtlConfig",
    "RtlError",
    "RtlModel",
    "TlConfig",
    "TlResult",
    "TrainedModel",
    "VersionError",
    "build_recurrent_system",
    "fit_r2tl",
    "fit_rtl",
    "fit_rtl_regressor",
    "fit_transform_learning",
    "infer_coefficients",
    "predict",
    "solve_coefficients",
    "tl_objective",
    "transform_update_closed_form",
]
