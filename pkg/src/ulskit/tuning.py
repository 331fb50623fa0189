"""Cross-validated selection of the regularization weight lambda.

The subsample is split into shuffled round-robin folds; each candidate
lambda is fitted on the training folds and scored by squared prediction
error on the held-out fold. Ties break toward the larger (more conservative)
lambda. GradDiff candidates whose objective is indefinite on a training fold
or on the full subsample are skipped with an infinite score rather than
failing the search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .data_model import Dataset, PretrainedModel, SufficientStats, compute_stats
from .errors import IndefiniteObjective, InsufficientData, NoFeasibleLambda
from .estimators import (
    graddiff_theta,
    ols_fit,
    transfer_ridge_theta,
    uls_plus_theta,
)
from .numerics import RngStream

CV_METHODS = ("uls+", "graddiff", "tl")


def plugin_lambda(model: PretrainedModel, forget: Dataset, sub: Dataset) -> float:
    """Plug-in retain weight for the robustified estimator.

    Estimates the model discrepancy as the gap between separate least-squares
    fits of the subsample and the forget set, then returns
    omega_r * omega_f * delta_hat. Needs enough forget rows for their own
    fit (n_f >= p); cross-validation is the alternative when there are not.
    """
    delta_hat = float(
        np.linalg.norm(ols_fit(sub).theta - ols_fit(forget).theta)
    )
    w = model.weights()
    return w.omega_r * w.omega_f * delta_hat


def log_grid(lo: float, hi: float, k: int) -> list[float]:
    """k log-uniform candidates from lo to hi, endpoints exact."""
    if not 0.0 < lo < hi:
        raise ValueError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    if k < 2:
        raise ValueError(f"need at least two grid points, got {k}")
    return [float(v) for v in np.geomspace(lo, hi, k)]


def _default_grid() -> tuple[float, ...]:
    return tuple(log_grid(1e-4, 1e4, 20))


@dataclass(frozen=True)
class CvSpec:
    """Fold count and lambda grid; scoring is held-out mean squared error."""

    folds: int = 5
    grid: tuple[float, ...] = field(default_factory=_default_grid)

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least two folds")
        grid = tuple(float(v) for v in self.grid)
        if not grid:
            raise ValueError("grid must be nonempty")
        if any(v <= 0.0 for v in grid):
            raise ValueError("grid values must be positive")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)


@dataclass(frozen=True)
class _FoldStats:
    """Second moments of one fold, including mean response square for scoring."""

    sigma: np.ndarray
    m: np.ndarray
    yy: float
    n: int


def _fold_split(d: Dataset, folds: int, rng: RngStream) -> list[np.ndarray]:
    perm = rng.permutation(d.n)
    return [np.sort(perm[j::folds]) for j in range(folds)]


def _fold_stats(d: Dataset, idx: np.ndarray) -> _FoldStats:
    x, y = d.x[idx], d.y[idx]
    n = len(idx)
    return _FoldStats(sigma=x.T @ x / n, m=x.T @ y / n, yy=float(y @ y) / n, n=n)


def _train_stats(total: _FoldStats, heldout: _FoldStats) -> SufficientStats:
    n = total.n - heldout.n
    sigma = (total.n * total.sigma - heldout.n * heldout.sigma) / n
    m = (total.n * total.m - heldout.n * heldout.m) / n
    return SufficientStats(sigma=sigma, m=m, n=n)


def _heldout_mse(theta: np.ndarray, fold: _FoldStats) -> float:
    return float(fold.yy - 2.0 * theta @ fold.m + theta @ fold.sigma @ theta)


def cv_select(
    method: str,
    model: PretrainedModel,
    forget: Dataset,
    sub: Dataset,
    spec: CvSpec = CvSpec(),
    rng: RngStream | None = None,
):
    """Pick the grid lambda minimizing mean held-out MSE.

    Returns ``(lam, cv_table)`` where the table rows are
    ``(lam, fold_index, mse)`` for audit. Raises
    :class:`NoFeasibleLambda` when every candidate is infeasible and
    :class:`InsufficientData` when the subsample cannot support the folds.
    """
    if method not in CV_METHODS:
        raise ValueError(f"unknown CV method {method!r}; expected {CV_METHODS}")
    if rng is None:
        rng = RngStream(0, 0)
    if sub.n < spec.folds * (sub.p + 1):
        raise InsufficientData(
            f"need at least folds*(p+1) = {spec.folds * (sub.p + 1)} subsample"
            f" rows, got {sub.n}"
        )
    w = model.weights()
    st_f = compute_stats(forget) if forget.n else None
    if method in ("uls+", "graddiff") and st_f is None:
        st_f = SufficientStats(
            sigma=np.zeros((sub.p, sub.p)), m=np.zeros(sub.p), n=0
        )
    st_full = compute_stats(sub)

    fold_idx = _fold_split(sub, spec.folds, rng)
    fold_stats = [_fold_stats(sub, idx) for idx in fold_idx]
    total = _FoldStats(
        sigma=st_full.sigma,
        m=st_full.m,
        yy=float(sub.y @ sub.y) / sub.n,
        n=sub.n,
    )

    def fit(lam: float, train: SufficientStats) -> np.ndarray:
        if method == "uls+":
            return uls_plus_theta(model.theta_p, w.omega_f, w.omega_r, train, st_f, lam)
        if method == "graddiff":
            return graddiff_theta(train, st_f, lam)
        return transfer_ridge_theta(model.theta_p, train, lam)

    def feasible_on_full(lam: float) -> bool:
        if method != "graddiff":
            return True
        try:
            graddiff_theta(st_full, st_f, lam)
        except IndefiniteObjective:
            return False
        return True

    cv_table = []
    means = []
    for lam in spec.grid:
        scores = []
        dead = not feasible_on_full(lam)
        for j, held in enumerate(fold_stats):
            if dead:
                mse = math.inf
            else:
                try:
                    theta = fit(lam, _train_stats(total, held))
                    mse = _heldout_mse(theta, held)
                except IndefiniteObjective:
                    mse = math.inf
                    dead = True
            cv_table.append((lam, j, mse))
        scores = [mse for lam2, j2, mse in cv_table[-spec.folds:]]
        means.append(math.inf if dead else float(np.mean(scores)))

    best = min(means)
    if math.isinf(best):
        raise NoFeasibleLambda(
            "every grid lambda failed the definiteness check"
        )
    # ties break toward the larger lambda
    chosen = max(lam for lam, mean in zip(spec.grid, means) if mean == best)
    return chosen, cv_table
