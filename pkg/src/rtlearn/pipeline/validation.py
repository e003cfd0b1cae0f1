"""Temporal train/test split and contiguous-block cross-validation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..exceptions import InsufficientDataError
from .features import DesignMatrix

__all__ = ["split_half", "kfold_indices", "kfold_cv", "CVResult"]


def split_half(dm: DesignMatrix):
    """First ``ceil(n/2)`` columns train, the rest test. Never shuffles."""
    if dm.n < 2:
        raise InsufficientDataError(f"need at least 2 samples to split, got {dm.n}")
    cut = (dm.n + 1) // 2
    return dm.subset(np.arange(cut)), dm.subset(np.arange(cut, dm.n))


def kfold_indices(n: int, folds: int = 5) -> list:
    """Contiguous validation blocks covering ``range(n)`` exactly once."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if n < folds:
        raise InsufficientDataError(f"need at least {folds} samples for {folds}-fold CV, got {n}")
    return np.array_split(np.arange(n), folds)


@dataclass
class CVResult:
    mean: float
    scores: list
    folds: list


def kfold_cv(dm: DesignMatrix, fit_and_score, folds: int = 5) -> CVResult:
    """Run ``fit_and_score(train, validation) -> float`` on each contiguous fold.

    The training part of a fold is the remaining columns in time order.
    """
    blocks = kfold_indices(dm.n, folds)
    scores = []
    for val in blocks:
        train = np.setdiff1d(np.arange(dm.n), val)
        scores.append(float(fit_and_score(dm.subset(train), dm.subset(val))))
    return CVResult(float(np.mean(scores)), scores, blocks)
