"""Long-only Sharpe-ratio portfolios, their L2-anchored transfer, and the
two-part portfolio transfer risk (inverse source Sharpe + Gaussian W2).

Portfolios are 1-D numpy weight vectors on the unit simplex.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .divergence import GaussianDist, w2sq_gaussian_multi
from .errors import (
    DimensionMismatch,
    DimensionTooLarge,
    InsufficientData,
    NonPositiveSourceSharpe,
    NotSPD,
    ZeroVariancePortfolio,
)
from .kernels import pga_maximize, project_simplex as _project_simplex
from .spd import as_sym, check_spd, is_spd

TRADING_DAYS = 252
SESSION_MINUTES = 390


def annualization_factor(frequency: str) -> float:
    """Periods per year: 252 for daily bars, ``252 * 390 / minutes`` intraday."""
    if frequency == "1d":
        return float(TRADING_DAYS)
    if frequency.endswith("m"):
        minutes = int(frequency[:-1])
        return TRADING_DAYS * SESSION_MINUTES / minutes
    raise ValueError(f"unknown frequency {frequency!r}")


@dataclass(frozen=True, eq=False)
class Moments:
    mu: np.ndarray
    sigma: np.ndarray
    annualization_factor: float = 1.0
    regularized: bool = False

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64)).ravel()
        sigma = as_sym(self.sigma)
        if sigma.shape[0] != mu.size:
            raise DimensionMismatch(f"mu has length {mu.size}, sigma is {sigma.shape}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self) -> int:
        return self.mu.size

    def law(self) -> GaussianDist:
        return GaussianDist(self.mu, self.sigma)


@dataclass(frozen=True)
class PortfolioRisk:
    r1: float
    r2: float
    total: float


@dataclass(frozen=True)
class OptimizerOptions:
    restarts: int = 8
    max_iters: int = 10000
    step_init: float = 0.1
    tol: float = 1e-8
    ridge_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("restarts", "max_iters", "step_init", "tol", "ridge_eps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def estimate_moments(returns, annualization_factor: float = 1.0, ridge_eps: float = 1e-8) -> Moments:
    """Annualized sample mean and unbiased covariance.

    ``returns`` is an asset x time matrix (or a ``ReturnPanel``).  A covariance
    that is not SPD gets ``ridge_eps * I`` added once, and the result is
    flagged ``regularized``.
    """
    r = getattr(returns, "returns", returns)
    r = np.atleast_2d(np.asarray(r, dtype=np.float64))
    if r.shape[1] < 2:
        raise InsufficientData(f"need at least 2 observations per asset, got {r.shape[1]}")
    if not np.all(np.isfinite(r)):
        raise InsufficientData("returns contain missing or non-finite values")
    mu = annualization_factor * r.mean(axis=1)
    sigma = annualization_factor * np.atleast_2d(np.cov(r, ddof=1))
    if is_spd(sigma):
        return Moments(mu, sigma, annualization_factor, False)
    sigma = sigma + ridge_eps * np.eye(sigma.shape[0])
    check_spd(sigma)
    return Moments(mu, sigma, annualization_factor, True)


def sharpe(phi, m: Moments) -> float:
    phi = np.asarray(phi, dtype=np.float64).ravel()
    if phi.size != m.dim:
        raise DimensionMismatch(f"portfolio has {phi.size} weights, moments have {m.dim} assets")
    var = float(phi @ m.sigma @ phi)
    if var <= 0.0:
        raise ZeroVariancePortfolio("portfolio variance is zero")
    return float(m.mu @ phi) / math.sqrt(var)


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto ``{phi >= 0, sum(phi) = 1}``."""
    v = np.atleast_1d(np.asarray(v, dtype=np.float64)).ravel()
    if v.size < 1:
        raise ValueError("cannot project an empty vector")
    return _project_simplex(v)


def is_feasible(phi) -> bool:
    phi = np.asarray(phi, dtype=np.float64)
    return bool(np.all(phi >= -1e-12) and abs(float(phi.sum()) - 1.0) <= 1e-9)


def objective(phi, m: Moments, anchor=None, lam: float = 0.0) -> float:
    """Sharpe ratio minus ``lam * ||phi - anchor||^2``."""
    val = sharpe(phi, m)
    if lam:
        diff = np.asarray(phi) - np.asarray(anchor)
        val -= lam * float(diff @ diff)
    return val


def start_points(d: int, opts: OptimizerOptions, extra=()) -> list[np.ndarray]:
    """Vertices, the barycentre, ``opts.restarts`` seeded random points, then extras."""
    starts = [row for row in np.eye(d)]
    starts.append(np.full(d, 1.0 / d))
    rng = np.random.Generator(np.random.Philox(opts.seed))
    starts.extend(rng.dirichlet(np.ones(d), size=opts.restarts))
    starts.extend(np.asarray(e, dtype=np.float64) for e in extra)
    return starts


@dataclass
class OptimizerResult:
    weights: np.ndarray
    objective: float
    start_index: int
    iterations: list[int] = field(default_factory=list)


def _maximize(m: Moments, anchor: np.ndarray, lam: float, opts: OptimizerOptions, extra=()) -> OptimizerResult:
    if not is_spd(m.sigma):
        raise NotSPD("covariance is not SPD")
    best = None
    iters = []
    for idx, start in enumerate(start_points(m.dim, opts, extra)):
        phi, val, it = pga_maximize(m.mu, m.sigma, anchor, lam, start, opts.step_init, opts.tol, opts.max_iters)
        iters.append(int(it))
        if best is None or val > best.objective:
            best = OptimizerResult(np.asarray(phi), float(val), idx)
    best.iterations = iters
    return best


def max_sharpe_result(m: Moments, opts: OptimizerOptions | None = None) -> OptimizerResult:
    opts = opts or OptimizerOptions()
    return _maximize(m, np.zeros(m.dim), 0.0, opts)


def max_sharpe(m: Moments, opts: OptimizerOptions | None = None) -> np.ndarray:
    """Long-only maximum-Sharpe portfolio by multi-start projected gradient ascent.

    The problem is not concave in general; the best of the local solutions is
    returned, which is never worse than any start point.
    """
    return max_sharpe_result(m, opts).weights


def transfer_portfolio(m_target: Moments, phi_source, lam: float = 0.2,
                       opts: OptimizerOptions | None = None) -> np.ndarray:
    """Maximize target Sharpe minus ``lam * ||phi_source - phi||^2`` on the simplex."""
    opts = opts or OptimizerOptions()
    anchor = np.asarray(phi_source, dtype=np.float64).ravel()
    if anchor.size != m_target.dim:
        raise DimensionMismatch(f"source portfolio has {anchor.size} weights, target has {m_target.dim} assets")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    return _maximize(m_target, anchor, float(lam), opts, extra=(anchor,)).weights


def portfolio_transfer_risk(m_source: Moments, phi_source, m_target: Moments) -> PortfolioRisk:
    """``R1 = 1 / Sharpe_S(phi_S)`` plus ``R2 = W2(N_S, N_T)`` (not squared)."""
    if m_source.dim != m_target.dim:
        raise DimensionMismatch(f"source has {m_source.dim} assets, target has {m_target.dim}")
    s = sharpe(phi_source, m_source)
    if not s > 0.0:
        raise NonPositiveSourceSharpe(f"source Sharpe ratio {s:.6g} is not positive")
    r1 = 1.0 / s
    r2 = math.sqrt(w2sq_gaussian_multi(m_source.law(), m_target.law()))
    return PortfolioRisk(r1, r2, r1 + r2)


def simplex_lattice(d: int, step: float) -> np.ndarray:
    """All simplex points whose coordinates are multiples of ``step``."""
    if not 0 < step <= 0.5:
        raise ValueError("step must lie in (0, 0.5]")
    n = round(1.0 / step)
    if abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"1/step must be an integer, got step={step}")
    if d == 1:
        return np.ones((1, 1))
    # stars and bars: choose d-1 cut positions among n + d - 1 slots
    pts = []
    for cuts in itertools.combinations(range(n + d - 1), d - 1):
        prev = -1
        counts = []
        for c in cuts:
            counts.append(c - prev - 1)
            prev = c
        counts.append(n + d - 1 - prev - 1)
        pts.append(counts)
    return np.asarray(pts, dtype=np.float64) / n


def grid_oracle(m: Moments, phi_source=None, lam: float = 0.0, step: float = 0.01) -> np.ndarray:
    """Exhaustive search of the (penalized) objective over the simplex lattice."""
    if m.dim > 4:
        raise DimensionTooLarge(f"grid oracle supports d <= 4, got {m.dim}")
    pts = simplex_lattice(m.dim, step)
    var = np.einsum("ij,jk,ik->i", pts, m.sigma, pts)
    vals = (pts @ m.mu) / np.sqrt(var)
    if lam:
        diff = pts - np.asarray(phi_source, dtype=np.float64)
        vals = vals - lam * np.einsum("ij,ij->i", diff, diff)
    return pts[int(np.argmax(vals))]
