"""Truncated path signatures of piecewise-linear paths.

Coefficients are stored flat, level-major, and within each level in
row-major multi-index order: level ``k`` occupies ``d**k`` slots and the word
``(i1, ..., ik)`` (0-based) sits at ``i1*d**(k-1) + ... + ik``.  Level 0 is
the constant 1.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePath, DimensionMismatch, InsufficientHistory, SeriesMismatch
from .kernels import chen_product as _chen_product
from .kernels import signature_from_increments


def sig_length(d: int, m: int) -> int:
    """Number of coefficients ``sum_{k=0..m} d**k`` including level 0."""
    if d < 1 or m < 1:
        raise ValueError("d and m must be >= 1")
    total = sum(d ** k for k in range(m + 1))
    if total > sys.maxsize:
        raise OverflowError(f"signature of dimension {d} and order {m} has {total} coefficients")
    return total


def level_offsets(d: int, m: int) -> list[int]:
    offsets = [0]
    for k in range(m + 1):
        offsets.append(offsets[-1] + d ** k)
    return offsets


def words(d: int, k: int):
    """Multi-indices of level ``k`` in storage order (1-based letters)."""
    return itertools.product(range(1, d + 1), repeat=k)


@dataclass(frozen=True, eq=False)
class TruncatedSignature:
    d: int
    m: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.float64).ravel()
        if coeffs.size != sig_length(self.d, self.m):
            raise DimensionMismatch(f"expected {sig_length(self.d, self.m)} coefficients, got {coeffs.size}")
        object.__setattr__(self, "coeffs", coeffs)

    def level(self, k: int) -> np.ndarray:
        off = level_offsets(self.d, self.m)
        return self.coeffs[off[k]:off[k + 1]]

    @property
    def levels(self) -> list[np.ndarray]:
        return [self.level(k) for k in range(self.m + 1)]

    def __getitem__(self, word) -> float:
        """Coefficient of a 1-based word, e.g. ``sig[1, 2]``; ``sig[()]`` is level 0."""
        if isinstance(word, int):
            word = (word,)
        idx = 0
        for letter in word:
            idx = idx * self.d + (letter - 1)
        return float(self.level(len(word))[idx])

    def features(self) -> np.ndarray:
        """Coefficients with the constant level-0 entry dropped."""
        return self.coeffs[1:].copy()

    def headers(self) -> list[str]:
        return [
            "S_" + "_".join(str(i) for i in w)
            for k in range(1, self.m + 1)
            for w in words(self.d, k)
        ]


@dataclass(frozen=True, eq=False)
class Path:
    """Discrete samples of a path, joined by straight lines."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64).ravel()
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[:, None]
        if values.shape[0] != times.size:
            raise DimensionMismatch("times and values must have the same length")
        if times.size < 2:
            raise DegeneratePath("a path needs at least two points")
        if np.any(np.diff(times) <= 0):
            raise ValueError("path times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_values(cls, values) -> "Path":
        values = np.asarray(values, dtype=np.float64)
        return cls(np.arange(values.shape[0], dtype=np.float64), values)

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def segment_signature(delta, m: int) -> TruncatedSignature:
    """Signature of one straight segment: level k is ``delta^{(x)k} / k!``."""
    delta = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    return TruncatedSignature(delta.size, m, signature_from_increments(delta[None, :], m))


def chen_product(a: TruncatedSignature, b: TruncatedSignature) -> TruncatedSignature:
    """Signature of the concatenation of the paths of ``a`` then ``b``."""
    if a.d != b.d or a.m != b.m:
        raise DimensionMismatch(f"cannot multiply signatures ({a.d}, {a.m}) and ({b.d}, {b.m})")
    return TruncatedSignature(a.d, a.m, _chen_product(a.coeffs, b.coeffs, a.d, a.m))


def path_signature(path: Path | np.ndarray, m: int) -> TruncatedSignature:
    if not isinstance(path, Path):
        path = Path.from_values(path)
    increments = np.diff(path.values, axis=0)
    return TruncatedSignature(path.dim, m, signature_from_increments(increments, m))


@dataclass(frozen=True, eq=False)
class FeatureRow:
    x: np.ndarray
    y: float
    t: int


def window_path(log_price: np.ndarray, log_volume: np.ndarray, t: int, lag: int) -> np.ndarray:
    """The 3-D path (time in [0, 1], log price, log volume) ending at index t."""
    lo = t - lag + 1
    clock = np.linspace(0.0, 1.0, lag)
    return np.column_stack([clock, log_price[lo:t + 1], log_volume[lo:t + 1]])


def build_feature_arrays(log_price, log_volume, lag: int, m: int):
    """Windowed signature features as arrays ``(x, y, t)``.

    Row ``i`` uses the window ending at ``t[i]`` and its target is the next
    log return ``log_price[t+1] - log_price[t]``.
    """
    log_price = np.asarray(log_price, dtype=np.float64).ravel()
    log_volume = np.asarray(log_volume, dtype=np.float64).ravel()
    if log_price.size != log_volume.size:
        raise SeriesMismatch(f"price has {log_price.size} points, volume has {log_volume.size}")
    if lag < 2:
        raise InsufficientHistory("lag must be at least 2 so each window is a path")
    n = log_price.size
    if n < lag + 1:
        raise InsufficientHistory(f"need at least {lag + 1} points for lag {lag}, got {n}")
    ts = np.arange(lag - 1, n - 1)
    x = np.empty((ts.size, sig_length(3, m) - 1))
    for row, t in enumerate(ts):
        path = window_path(log_price, log_volume, t, lag)
        x[row] = signature_from_increments(np.diff(path, axis=0), m)[1:]
    y = log_price[ts + 1] - log_price[ts]
    return x, y, ts


def build_feature_dataset(log_price, log_volume, lag: int, m: int) -> list[FeatureRow]:
    x, y, ts = build_feature_arrays(log_price, log_volume, lag, m)
    return [FeatureRow(x[i], float(y[i]), int(ts[i])) for i in range(ts.size)]
