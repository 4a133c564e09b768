"""Small symmetric-positive-definite matrix kernel.

Matrices are plain 2-D numpy arrays.  Every entry point symmetrizes its input
(``(A + A.T) / 2``) so downstream code can rely on exact symmetry, and SPD-ness
is judged from the eigenvalues of a cyclic Jacobi decomposition against
``spd_tolerance``.  Nothing is clamped: an eigenvalue at or below the
tolerance raises :class:`~transfer_risk.errors.NotSPD`.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NotSPD
from .kernels import jacobi_eigh


def as_sym(a) -> np.ndarray:
    """Return ``a`` as a float64 square matrix, exactly symmetrized."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim < 2:
        a = np.atleast_2d(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def spd_tolerance(a: np.ndarray) -> float:
    return 1e-12 * (1.0 + float(a.diagonal().max()))


def _eigh_sorted(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if a.shape[0] == 1:
        return a[0].copy(), np.ones((1, 1))
    w, v = jacobi_eigh(a)
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def sym_eigh(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition (ascending eigenvalues) of a symmetric matrix."""
    return _eigh_sorted(as_sym(a))


def spd_eigh(a) -> tuple[np.ndarray, np.ndarray]:
    a = as_sym(a)
    if not np.isfinite(a).all():
        raise NotSPD("matrix has non-finite entries")
    w, v = _eigh_sorted(a)
    tol = spd_tolerance(a)
    if w[0] <= tol:
        raise NotSPD(f"smallest eigenvalue {w[0]:.3e} <= tolerance {tol:.3e}")
    return w, v


def is_spd(a) -> bool:
    try:
        spd_eigh(a)
    except NotSPD:
        return False
    return True


def check_spd(a) -> np.ndarray:
    """Validate and return the symmetrized matrix."""
    a = as_sym(a)
    spd_eigh(a)
    return a


def spd_sqrt(a) -> np.ndarray:
    """Principal square root of an SPD matrix."""
    w, v = spd_eigh(a)
    r = (v * np.sqrt(w)) @ v.T
    return 0.5 * (r + r.T)


def spd_solve(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` for SPD ``a`` (``b`` may be a vector or matrix)."""
    a = as_sym(a)
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != a.shape[0]:
        raise DimensionMismatch(f"matrix is {a.shape[0]}x{a.shape[0]} but rhs has length {b.shape[0]}")
    w, v = spd_eigh(a)
    coef = v.T @ b
    coef /= w if b.ndim == 1 else w[:, None]
    return v @ coef


def spd_inv(a) -> np.ndarray:
    a = as_sym(a)
    inv = spd_solve(a, np.eye(a.shape[0]))
    return 0.5 * (inv + inv.T)


def spd_logdet(a) -> float:
    w, _ = spd_eigh(a)
    return float(np.sum(np.log(w)))
