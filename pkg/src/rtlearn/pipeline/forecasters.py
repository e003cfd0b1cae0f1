"""Uniform fit/predict wrappers around the models and baselines.

Every forecaster is fit on a training :class:`DesignMatrix` and predicts the
next-day totals of another. ``contiguous=True`` at prediction time means the
columns directly continue the training sequence, which lets the recurrent
models carry their final training state instead of restarting from zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..supervised import (
    Normalization,
    R2tlConfig,
    TrainedModel,
    fit_r2tl,
    fit_rtl_regressor,
    predict,
    update_regression_weights,
)
from ..transform import TlConfig, fit_transform_learning
from .features import DesignMatrix

__all__ = ["MODEL_KINDS", "basis_count", "make_forecaster", "Forecaster"]

MODEL_KINDS = ("rtl", "r2tl", "tl_ridge", "ridge_raw", "persistence")


def basis_count(d: int, fraction: float = 0.5) -> int:
    """Number of basis rows: ``fraction`` of the input size, at least 1."""
    if not 0 < fraction <= 1:
        raise ValueError("k fraction must lie in (0, 1]")
    return max(1, int(round(fraction * d)))


@dataclass
class Forecaster:
    kind: str
    lam: float = 0.1
    mu: float = 1.0
    gamma: float = 0.05
    epsilon: float = 1e-3
    k_fraction: float = 0.5
    max_iters: int = 20
    rel_tol: float = 1e-4
    test_z0: str = "carry"
    input_scaling: str = "zscore"
    model: object = field(default=None, repr=False)

    def config(self, d: int) -> R2tlConfig:
        return R2tlConfig(
            k=basis_count(d, self.k_fraction), lam=self.lam, mu=self.mu, gamma=self.gamma,
            epsilon=self.epsilon, max_iters=self.max_iters, rel_tol=self.rel_tol,
            input_scaling=self.input_scaling,
        )

    def fit(self, train: DesignMatrix) -> "Forecaster":
        X, l = train.X, train.l
        if self.kind == "r2tl":
            self.model = fit_r2tl(X, l, self.config(train.d))
        elif self.kind == "rtl":
            self.model = fit_rtl_regressor(X, l, self.config(train.d))
        elif self.kind == "tl_ridge":
            norm = Normalization.fit(X, l, self.input_scaling)
            cfg = self.config(train.d)
            tl = fit_transform_learning(
                norm.inputs(X), cfg.k,
                TlConfig(lam=self.lam, epsilon=self.epsilon, max_iters=self.max_iters, rel_tol=self.rel_tol),
            )
            w = update_regression_weights(tl.coefficients, norm.target(l), 1.0, self.gamma)
            self.model = (norm, tl.transform, w)
        elif self.kind == "ridge_raw":
            norm = Normalization.fit(X, l, self.input_scaling)
            w = update_regression_weights(norm.inputs(X), norm.target(l), 1.0, self.gamma)
            self.model = (norm, w)
        elif self.kind == "persistence":
            self.model = ()
        else:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {MODEL_KINDS}")
        return self

    def predict(self, dm: DesignMatrix, contiguous: bool = False) -> np.ndarray:
        if self.model is None:
            raise RuntimeError("forecaster is not fitted")
        if self.kind in ("r2tl", "rtl"):
            policy = self.test_z0 if contiguous else "zero"
            return predict(self.model, dm.X, z0=policy)
        if self.kind == "tl_ridge":
            norm, T, w = self.model
            return norm.untarget(w @ (T @ norm.inputs(dm.X)))
        if self.kind == "ridge_raw":
            norm, w = self.model
            return norm.untarget(w @ norm.inputs(dm.X))
        return dm.last_day_load()

    @property
    def trained(self) -> TrainedModel | None:
        return self.model if isinstance(self.model, TrainedModel) else None


def make_forecaster(kind: str, **params) -> Forecaster:
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return Forecaster(kind, **params)
