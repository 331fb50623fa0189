"""Differentiable losses: squared error and binary cross-entropy.

Values and gradients are sums over the dataset's rows, not means. The squared
loss carries no 1/2 factor, so its gradient is -2 X'(y - X theta); the
factor of two cancels inside the closed-form unlearning algebra.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data_model import LOSS_IDS, Dataset
from .errors import DimensionMismatch


@dataclass(frozen=True)
class LossFn:
    loss_id: str

    def __post_init__(self):
        if self.loss_id not in LOSS_IDS:
            raise ValueError(f"unknown loss {self.loss_id!r}; expected {LOSS_IDS}")


SQUARED = LossFn("squared")
LOGISTIC = LossFn("logistic")


def get_loss(loss_id: str) -> LossFn:
    return LossFn(loss_id)


def _check_theta(theta, d: Dataset) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (d.p,):
        raise DimensionMismatch(
            f"theta has shape {theta.shape}, dataset has p={d.p}"
        )
    return theta


def _check_labels(d: Dataset) -> None:
    if d.n and not np.all((d.y == 0.0) | (d.y == 1.0)):
        raise ValueError("logistic loss requires responses in {0, 1}")


def loss_value(f: LossFn, theta, d: Dataset) -> float:
    """Total loss of theta over the dataset (0 for an empty dataset)."""
    theta = _check_theta(theta, d)
    if d.n == 0:
        return 0.0
    u = d.x @ theta
    if f.loss_id == "squared":
        r = d.y - u
        return float(r @ r)
    _check_labels(d)
    # y*log(1+exp(-u)) + (1-y)*log(1+exp(u)), computed via logaddexp for
    # stability at large |u|
    return float(np.sum(d.y * np.logaddexp(0.0, -u) + (1.0 - d.y) * np.logaddexp(0.0, u)))


def loss_grad(f: LossFn, theta, d: Dataset) -> np.ndarray:
    """Gradient of :func:`loss_value` with respect to theta."""
    theta = _check_theta(theta, d)
    if d.n == 0:
        return np.zeros_like(theta)
    u = d.x @ theta
    if f.loss_id == "squared":
        return -2.0 * (d.x.T @ (d.y - u))
    _check_labels(d)
    return d.x.T @ (expit(u) - d.y)
