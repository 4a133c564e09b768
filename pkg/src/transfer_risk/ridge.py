"""Direct and transfer ridge regression on standardized features.

There is no intercept: features and target are z-scored first, so the fit
is through the origin.  Metrics are reported on that standardized scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .divergence import w2sq_empirical_1d
from .errors import (
    ConstantActuals,
    ConstantSeries,
    DimensionMismatch,
    EmptyDataset,
    SingularSystem,
    StructureMismatch,
)

STD_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class FeatureStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @property
    def kept(self) -> np.ndarray:
        return np.flatnonzero(self.x_std > STD_FLOOR)


@dataclass(frozen=True, eq=False)
class RidgeModel:
    theta: np.ndarray
    lam: float
    kept_features: np.ndarray
    stats: FeatureStats | None = None

    def predict(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.theta


@dataclass(frozen=True)
class MetricsReport:
    mse: float
    r2: float
    corr: float


def pearson(xs, ys) -> float:
    """Sample Pearson correlation, clipped to [-1, 1]."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise DimensionMismatch(f"lengths differ: {x.size} vs {y.size}")
    if x.size < 2:
        raise ConstantSeries("need at least two points")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx <= 0.0 or syy <= 0.0:
        raise ConstantSeries("correlation is undefined for a constant series")
    return max(-1.0, min(1.0, float(dx @ dy) / math.sqrt(sxx * syy)))


def standardize(x, y, stats: FeatureStats | None = None):
    """Z-score features and target.

    Without ``stats`` the transform is estimated on ``(x, y)`` and columns with
    standard deviation at or below 1e-12 are dropped.  With ``stats`` the
    stored transform is applied as-is.  Returns ``(x_std, y_std, stats)``.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDataset("feature matrix is empty")
    if y.size != x.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} feature rows but {y.size} targets")
    if stats is None:
        y_std = float(y.std())
        if y_std <= STD_FLOOR:
            raise ConstantSeries("target has zero variance")
        stats = FeatureStats(x.mean(axis=0), x.std(axis=0), float(y.mean()), y_std)
    elif x.shape[1] != stats.x_mean.size:
        raise DimensionMismatch(f"stats cover {stats.x_mean.size} columns, data has {x.shape[1]}")
    kept = stats.kept
    xs = (x[:, kept] - stats.x_mean[kept]) / stats.x_std[kept]
    ys = (y - stats.y_mean) / stats.y_std
    return xs, ys, stats


def _solve(x, y, lam: float, anchor: np.ndarray | None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptyDataset("design matrix is empty")
    if y.size != x.shape[0]:
        raise DimensionMismatch(f"{x.shape[0]} rows but {y.size} targets")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    n, p = x.shape
    gram = x.T @ x / n
    rhs = x.T @ y / n
    if anchor is not None:
        if anchor.size != p:
            raise DimensionMismatch(f"source parameters have length {anchor.size}, design has {p} columns")
        rhs = rhs + lam * anchor
    if lam == 0.0 and np.linalg.matrix_rank(x) < p:
        raise SingularSystem("design is rank deficient; use lambda > 0")
    return np.linalg.solve(gram + lam * np.eye(p), rhs)


def fit_ridge(x, y, lam: float) -> RidgeModel:
    """Minimize ``mean((x @ theta - y)**2) + lam * ||theta||**2``."""
    theta = _solve(x, y, lam, None)
    return RidgeModel(theta, lam, np.arange(theta.size))


def fit_transfer_ridge(x, y, lam: float, theta_source) -> RidgeModel:
    """Minimize ``mean((x @ theta - y)**2) + lam * ||theta - theta_source||**2``."""
    anchor = np.asarray(theta_source, dtype=np.float64).ravel()
    theta = _solve(x, y, lam, anchor)
    return RidgeModel(theta, lam, np.arange(theta.size))


def ridge_objective(x, y, theta, lam: float, theta_source=None) -> float:
    x = np.asarray(x, dtype=np.float64)
    resid = x @ theta - np.asarray(y, dtype=np.float64)
    diff = theta if theta_source is None else theta - theta_source
    return float(np.mean(resid ** 2) + lam * diff @ diff)


def evaluate(predictions, actuals) -> MetricsReport:
    pred = np.asarray(predictions, dtype=np.float64).ravel()
    act = np.asarray(actuals, dtype=np.float64).ravel()
    if pred.size != act.size or pred.size == 0:
        raise DimensionMismatch("predictions and actuals must have equal nonzero length")
    sse = float(np.sum((pred - act) ** 2))
    sst = float(np.sum((act - act.mean()) ** 2))
    if sst == 0.0:
        raise ConstantActuals("R^2 is undefined for constant actuals")
    return MetricsReport(sse / act.size, 1.0 - sse / sst, pearson(pred, act))


def prediction_transfer_risk(theta_source, x_test, y_test) -> float:
    """Empirical squared W2 between pretrained predictions and realized targets."""
    x_test = np.asarray(x_test, dtype=np.float64)
    if x_test.ndim != 2 or x_test.shape[0] == 0:
        raise EmptyDataset("test set is empty")
    return w2sq_empirical_1d(x_test @ np.asarray(theta_source, dtype=np.float64), y_test)


@dataclass
class PredictionResult:
    theta_source: np.ndarray
    direct: RidgeModel
    transfer: RidgeModel
    direct_metrics: MetricsReport
    transfer_metrics: MetricsReport
    transfer_risk: float
    direct_predictions: np.ndarray = field(repr=False)
    transfer_predictions: np.ndarray = field(repr=False)
    actuals: np.ndarray = field(repr=False)


def run_prediction(
    source_x,
    source_y,
    target_x,
    target_y,
    test_x,
    test_y,
    lambda_source: float = 1.0,
    lambda_target: float = 5.0,
    lambda_direct: float | None = None,
) -> PredictionResult:
    """Pretrain on pooled source rows, then fit direct and transfer target models.

    The source fit and the target fit each standardize with their own
    statistics; the set of retained feature columns must agree.  Test rows
    are standardized with the target training statistics.
    """
    if lambda_direct is None:
        lambda_direct = lambda_source
    xs, ys, s_stats = standardize(source_x, source_y)
    theta_s = fit_ridge(xs, ys, lambda_source).theta
    xt, yt, t_stats = standardize(target_x, target_y)
    if not np.array_equal(s_stats.kept, t_stats.kept):
        raise StructureMismatch("source and target keep different feature columns")
    direct = fit_ridge(xt, yt, lambda_direct)
    transfer = fit_transfer_ridge(xt, yt, lambda_target, theta_s)
    direct = RidgeModel(direct.theta, direct.lam, t_stats.kept, t_stats)
    transfer = RidgeModel(transfer.theta, transfer.lam, t_stats.kept, t_stats)
    xv, yv, _ = standardize(test_x, test_y, t_stats)
    pd_, pt_ = direct.predict(xv), transfer.predict(xv)
    return PredictionResult(
        theta_source=theta_s,
        direct=direct,
        transfer=transfer,
        direct_metrics=evaluate(pd_, yv),
        transfer_metrics=evaluate(pt_, yv),
        transfer_risk=prediction_transfer_risk(theta_s, xv, yv),
        direct_predictions=pd_,
        transfer_predictions=pt_,
        actuals=yv,
    )
