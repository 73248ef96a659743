"""Evaluation metrics: root mean square error and Pearson correlation."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import LengthMismatch


class ZeroVariance(ValueError):
    pass


def rmse(y, y_hat) -> float:
    """Square root of the mean squared residual."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise LengthMismatch(f"rmse over shapes {y.shape} and {y_hat.shape}")
    if y.size == 0:
        raise LengthMismatch("rmse over empty vectors")
    diff = y - y_hat
    return math.sqrt(float(diff @ diff) / y.size)


def pearson(y, y_hat) -> float:
    """Centered covariance over the product of centered norms."""
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape or y.ndim != 1:
        raise LengthMismatch(f"pearson over shapes {y.shape} and {y_hat.shape}")
    if y.size == 0:
        raise LengthMismatch("pearson over empty vectors")
    cy = y - y.mean()
    cy_hat = y_hat - y_hat.mean()
    denom = math.sqrt(float(cy @ cy) * float(cy_hat @ cy_hat))
    if denom == 0.0:
        raise ZeroVariance("pearson undefined for a constant vector")
    return float(cy @ cy_hat) / denom
