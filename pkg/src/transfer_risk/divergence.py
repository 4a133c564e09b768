"""KL and 2-Wasserstein divergences between Gaussians, plus helpers.

Argument order follows ``D(p || q)`` with ``q`` the law produced by the
intermediate (pretrained) model.  All Gaussians are assumed absolutely
continuous; a singular covariance raises ``NotSPD`` rather than being
regularized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptySample,
    InvalidProbabilityVector,
    NegativeRisk,
    NonPositiveVariance,
)
from .spd import check_spd, spd_logdet, spd_solve, spd_sqrt

QUANTILE_GRID_SIZE = 1000


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    var: float

    def __post_init__(self):
        if not (self.var > 0.0) or not math.isfinite(self.var):
            raise NonPositiveVariance(f"variance must be positive, got {self.var}")

    @property
    def std(self) -> float:
        return math.sqrt(self.var)


@dataclass(frozen=True, eq=False)
class GaussianDist:
    """Multivariate normal ``N(mean, cov)`` with SPD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = check_spd(self.cov)
        if mean.ndim != 1 or cov.shape[0] != mean.shape[0]:
            raise DimensionMismatch(f"mean has length {mean.shape[0]} but covariance is {cov.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


@dataclass(frozen=True)
class LinearRiskParams:
    lam: float = 1.0

    def __post_init__(self):
        if not (self.lam >= 0.0):
            raise NegativeRisk(f"lambda must be >= 0, got {self.lam}")


def kl_gaussian_1d(p: Gaussian1D, q: Gaussian1D) -> float:
    """KL(p || q) for univariate normals."""
    val = (
        0.5 * math.log(q.var / p.var)
        + (p.var + (p.mean - q.mean) ** 2) / (2.0 * q.var)
        - 0.5
    )
    return max(val, 0.0)


def _same_dim(p: GaussianDist, q: GaussianDist):
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimensions differ: {p.dim} vs {q.dim}")


def kl_gaussian_multi(p: GaussianDist, q: GaussianDist) -> float:
    """KL(p || q) for multivariate normals."""
    _same_dim(p, q)
    diff = p.mean - q.mean
    trace_term = float(np.trace(spd_solve(q.cov, p.cov)))
    maha = float(diff @ spd_solve(q.cov, diff))
    val = 0.5 * (trace_term - spd_logdet(p.cov) + spd_logdet(q.cov) - p.dim + maha)
    return max(val, 0.0)


def w2sq_gaussian_1d(p: Gaussian1D, q: Gaussian1D) -> float:
    return (p.mean - q.mean) ** 2 + (p.std - q.std) ** 2


def bures_trace(a: np.ndarray, b: np.ndarray) -> float:
    """``Tr(A + B - 2 (A^1/2 B A^1/2)^1/2)`` for SPD ``A``, ``B``."""
    ra = spd_sqrt(a)
    cross = spd_sqrt(ra @ b @ ra)
    return max(float(np.trace(a) + np.trace(b) - 2.0 * np.trace(cross)), 0.0)


def w2sq_gaussian_multi(p: GaussianDist, q: GaussianDist) -> float:
    """Squared Bures-Wasserstein distance between two Gaussians."""
    _same_dim(p, q)
    diff = p.mean - q.mean
    return float(diff @ diff) + bures_trace(p.cov, q.cov)


def _quantiles(sorted_x: np.ndarray, u: np.ndarray) -> np.ndarray:
    # left-continuous step quantile: Q(u) = x_(ceil(n u))
    n = sorted_x.shape[0]
    idx = np.clip(np.ceil(n * u).astype(np.int64) - 1, 0, n - 1)
    return sorted_x[idx]


def w2sq_empirical_1d(xs, ys) -> float:
    """Squared 2-Wasserstein distance between two empirical 1-D samples.

    Equal sample sizes pair order statistics exactly.  Unequal sizes compare
    both quantile functions on the midpoint grid ``(k - 1/2) / 1000``.
    """
    xs = np.sort(np.asarray(xs, dtype=np.float64).ravel())
    ys = np.sort(np.asarray(ys, dtype=np.float64).ravel())
    if xs.size == 0 or ys.size == 0:
        raise EmptySample("both samples must be nonempty")
    if xs.size == ys.size:
        return float(np.mean((xs - ys) ** 2))
    u = (np.arange(1, QUANTILE_GRID_SIZE + 1) - 0.5) / QUANTILE_GRID_SIZE
    return float(np.mean((_quantiles(xs, u) - _quantiles(ys, u)) ** 2))


def cross_entropy_bounds(target_ce: float, q_mass) -> tuple[float, float]:
    """Bracket ``H(P_T, P_ST)`` given the cross-entropy loss of the classifier.

    ``q_mass`` is the class probability vector of the intermediate model.
    """
    q = np.asarray(q_mass, dtype=np.float64).ravel()
    if q.size == 0 or np.any(q <= 0.0) or abs(float(q.sum()) - 1.0) > 1e-9:
        raise InvalidProbabilityVector("probabilities must be positive and sum to 1")
    s = float(np.sum(np.log(q)))
    return target_ce + s, target_ce - s


def combine_linear_risk(output_risk: float, input_risk: float, params: LinearRiskParams) -> float:
    if output_risk < 0.0 or input_risk < 0.0:
        raise NegativeRisk("risks must be nonnegative")
    return output_risk + params.lam * input_risk
