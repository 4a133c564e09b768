"""Bar-file ingestion, log returns, intraday resampling, date splits and
seeded Gaussian sample generation.

Bar files are CSV with the exact header ``timestamp,symbol,close,volume``
and an optional trailing ``session_date`` column.  Timestamps are integer
epoch seconds or ISO-8601 (UTC when no offset is given).  Without a
``session_date`` column the UTC calendar date of each bar is its session.
"""

from __future__ import annotations

import csv
import io
import math
import os
import re
from dataclasses import dataclass
from datetime import date, datetime, timezone

import numpy as np

from .errors import (
    EmptyResult,
    EmptySplit,
    FrequencyTooFine,
    InsufficientData,
    NonMonotoneTimestamps,
    NonPositivePrice,
    NoOverlap,
    ParseError,
)
from .spd import check_spd

HEADER = ("timestamp", "symbol", "close", "volume")
FREQUENCIES = ("1m", "5m", "10m", "30m", "65m", "130m", "1d")
DAY = 86400

_EPOCH = re.compile(r"^-?\d+$")


@dataclass(frozen=True, eq=False)
class BarSeries:
    symbol: str
    timestamps: np.ndarray
    close: np.ndarray
    volume: np.ndarray
    session_dates: np.ndarray

    def __post_init__(self):
        n = len(self.timestamps)
        if not (len(self.close) == len(self.volume) == len(self.session_dates) == n):
            raise ValueError("bar series fields must have equal lengths")
        if n > 1 and np.any(np.diff(self.timestamps) <= 0):
            raise NonMonotoneTimestamps(f"{self.symbol}: timestamps are not strictly increasing")
        if np.any(~(self.close > 0)):
            raise NonPositivePrice(f"{self.symbol}: close prices must be positive")

    def __len__(self) -> int:
        return len(self.timestamps)

    def take(self, idx) -> "BarSeries":
        return BarSeries(self.symbol, self.timestamps[idx], self.close[idx], self.volume[idx], self.session_dates[idx])

    def log_volume(self) -> np.ndarray:
        # zero-volume bars are floored at one share so the log stays finite
        return np.log(np.maximum(self.volume, 1.0))


@dataclass(frozen=True, eq=False)
class ReturnPanel:
    symbols: list
    timestamps: np.ndarray
    returns: np.ndarray
    frequency: str
    overnight_included: bool

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.returns, dtype=np.float64))
        if r.shape != (len(self.symbols), len(self.timestamps)):
            raise ValueError(f"returns shape {r.shape} does not match {len(self.symbols)} symbols x {len(self.timestamps)} times")
        if not np.all(np.isfinite(r)):
            raise InsufficientData("return panel has missing entries")
        object.__setattr__(self, "returns", r)

    @property
    def n_obs(self) -> int:
        return len(self.timestamps)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(panel_csv(self))


def fmt(x: float) -> str:
    """12 significant digits, locale independent, no negative zero."""
    x = float(x)
    if x == 0.0:
        return "0"
    return format(x, ".12g")


def panel_csv(panel: ReturnPanel) -> str:
    lines = [",".join(["timestamp", *panel.symbols])]
    for j, ts in enumerate(panel.timestamps):
        lines.append(",".join([str(int(ts)), *(fmt(v) for v in panel.returns[:, j])]))
    return "\n".join(lines) + "\n"


def read_panel_csv(path, frequency: str = "1d", overnight_included: bool = True) -> ReturnPanel:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "timestamp":
        raise ParseError("panel file must start with a timestamp column", line=1)
    body = rows[1:]
    ts = np.array([int(r[0]) for r in body], dtype=np.int64)
    ret = np.array([[float(v) for v in r[1:]] for r in body]).T.reshape(len(rows[0]) - 1, len(body))
    return ReturnPanel(rows[0][1:], ts, ret, frequency, overnight_included)


def parse_timestamp(text: str) -> int:
    text = text.strip()
    if _EPOCH.match(text):
        return int(text)
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_date(value) -> int:
    """A split boundary as epoch seconds: a date means 00:00 UTC of that day."""
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, datetime):
        return int(value.replace(tzinfo=value.tzinfo or timezone.utc).timestamp())
    if isinstance(value, date):
        return int(datetime(value.year, value.month, value.day, tzinfo=timezone.utc).timestamp())
    return parse_timestamp(str(value))


def _utc_date(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).date().isoformat()


def parse_bars(source) -> dict[str, BarSeries]:
    """Parse a bar CSV into one sorted, validated series per symbol.

    ``source`` is a path, bytes, text or an open file.  Rows are stably
    sorted by timestamp within each symbol; a repeated timestamp raises
    ``NonMonotoneTimestamps`` at the line of the repeat.
    """
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="utf-8", newline="") as fh:
            text = fh.read()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty input", line=1) from None
    header = [h.strip() for h in header]
    if tuple(header[:4]) != HEADER or header[4:] not in ([], ["session_date"]):
        raise ParseError("header must be 'timestamp,symbol,close,volume[,session_date]'", line=1)
    has_session = len(header) == 5

    per_symbol: dict[str, list] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            ts = parse_timestamp(row[0])
        except ValueError:
            raise ParseError(f"bad timestamp {row[0]!r}", line=lineno) from None
        symbol = row[1].strip()
        if not symbol:
            raise ParseError("empty symbol", line=lineno)
        try:
            close = float(row[2])
            volume = float(row[3])
        except ValueError:
            raise ParseError("close and volume must be numbers", line=lineno) from None
        if not (math.isfinite(close) and close > 0):
            raise NonPositivePrice(f"close must be positive, got {row[2]!r}", line=lineno)
        if not (math.isfinite(volume) and volume >= 0):
            raise ParseError(f"volume must be nonnegative, got {row[3]!r}", line=lineno)
        session = row[4].strip() if has_session else _utc_date(ts)
        per_symbol.setdefault(symbol, []).append((ts, close, volume, session, lineno))

    out = {}
    for symbol, recs in per_symbol.items():
        recs.sort(key=lambda r: r[0])
        for prev, cur in zip(recs, recs[1:]):
            if cur[0] == prev[0]:
                raise NonMonotoneTimestamps(f"duplicate timestamp {cur[0]} for {symbol}", line=max(cur[4], prev[4]))
        out[symbol] = BarSeries(
            symbol,
            np.array([r[0] for r in recs], dtype=np.int64),
            np.array([r[1] for r in recs], dtype=np.float64),
            np.array([r[2] for r in recs], dtype=np.float64),
            np.array([r[3] for r in recs], dtype=object),
        )
    return out


def log_returns(series: BarSeries) -> np.ndarray:
    close = np.asarray(getattr(series, "close", series), dtype=np.float64)
    if close.size < 2:
        raise InsufficientData("need at least 2 closes for a return")
    return np.diff(np.log(close))


def frequency_seconds(frequency: str) -> int | None:
    """Bar spacing in seconds; ``None`` for daily."""
    if frequency not in FREQUENCIES:
        raise ValueError(f"frequency must be one of {', '.join(FREQUENCIES)}, got {frequency!r}")
    if frequency == "1d":
        return None
    return int(frequency[:-1]) * 60


def native_spacing(series: BarSeries) -> int | None:
    """Smallest within-session bar spacing in seconds, ``None`` if daily."""
    same = series.session_dates[1:] == series.session_dates[:-1]
    gaps = np.diff(series.timestamps)[same.astype(bool)]
    return int(gaps.min()) if gaps.size else None


def _bucket_closes(series: BarSeries, frequency: str) -> np.ndarray:
    """Indices of the last bar in each bucket, buckets anchored at each session's first bar."""
    width = frequency_seconds(frequency)
    base = native_spacing(series)
    if width is not None and (base is None or base > width):
        raise FrequencyTooFine(f"bars are coarser than the requested {frequency} frequency")
    sessions = series.session_dates
    idx = []
    n = len(series)
    start = 0
    while start < n:
        end = start
        while end + 1 < n and sessions[end + 1] == sessions[start]:
            end += 1
        if width is None:
            idx.append(end)
        else:
            ts = series.timestamps[start:end + 1]
            bucket = (ts - ts[0]) // width
            last = np.flatnonzero(np.append(bucket[1:] != bucket[:-1], True))
            idx.extend((start + last).tolist())
        start = end + 1
    return np.asarray(idx, dtype=np.int64)


def resample_with_times(series: BarSeries, frequency: str, include_overnight: bool = True):
    """``(timestamps, returns)`` at ``frequency``; each return is labelled by its end bar."""
    idx = _bucket_closes(series, frequency)
    if idx.size < 2:
        raise EmptyResult(f"{series.symbol}: fewer than 2 closes at {frequency}")
    closes = series.close[idx]
    rets = np.diff(np.log(closes))
    ends = idx[1:]
    if not include_overnight:
        sess = series.session_dates[idx]
        keep = sess[1:] == sess[:-1]
        rets, ends = rets[keep.astype(bool)], ends[keep.astype(bool)]
    if rets.size == 0:
        raise EmptyResult(f"{series.symbol}: no returns at {frequency} (overnight {'in' if include_overnight else 'ex'}cluded)")
    return series.timestamps[ends], rets


def resample_returns(series: BarSeries, frequency: str, include_overnight: bool = True) -> np.ndarray:
    return resample_with_times(series, frequency, include_overnight)[1]


def inner_join(series: list[BarSeries], start=None, end=None) -> list[BarSeries]:
    """Restrict every series to the timestamps all of them share, within ``[start, end)``."""
    if not series:
        raise NoOverlap("no series given")
    common = series[0].timestamps
    for s in series[1:]:
        common = np.intersect1d(common, s.timestamps)
    if start is not None:
        common = common[common >= start]
    if end is not None:
        common = common[common < end]
    if common.size == 0:
        raise NoOverlap("series share no timestamps in the requested range")
    return [s.take(np.searchsorted(s.timestamps, common)) for s in series]


def align_and_split(series: list[BarSeries], train_end, test_end, frequency: str = "1d",
                    include_overnight: bool = True) -> tuple[ReturnPanel, ReturnPanel]:
    """Inner-join bars, build returns, and split them at ``train_end``.

    Returns are labelled by the timestamp of the bar that closes them; labels
    strictly before ``train_end`` go to train, labels in ``[train_end,
    test_end)`` go to test.
    """
    lo, hi = parse_date(train_end), parse_date(test_end)
    if hi <= lo:
        raise EmptySplit("test_end must come after train_end")
    joined = inner_join(list(series), end=hi)
    times = None
    rows = []
    for s in joined:
        ts, r = resample_with_times(s, frequency, include_overnight)
        times = ts if times is None else times
        rows.append(r)
    rets = np.vstack(rows)
    symbols = [s.symbol for s in joined]
    train = times < lo
    test = ~train
    if not train.any() or not test.any():
        raise EmptySplit(f"split leaves {int(train.sum())} train and {int(test.sum())} test returns")
    return (
        ReturnPanel(symbols, times[train], rets[:, train], frequency, include_overnight),
        ReturnPanel(symbols, times[test], rets[:, test], frequency, include_overnight),
    )


def make_rng(seed) -> np.random.Generator:
    """The repo-wide generator: Philox 4x64 keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=seed))


def synth_gaussian_samples(spec, n: int, seed) -> np.ndarray:
    """``n`` i.i.d. rows from a ``GaussianDist`` or the joint law of a ``GaussianTask``.

    Uses the Cholesky factor with an explicit elementwise product instead of
    a BLAS matmul, so results do not depend on thread count.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    law = spec.joint_law() if hasattr(spec, "joint_law") else spec
    mean = np.asarray(law.mean, dtype=np.float64)
    cov = check_spd(law.cov)
    chol = np.linalg.cholesky(cov)
    z = make_rng(seed).standard_normal((n, mean.size))
    out = np.empty_like(z)
    for i in range(mean.size):
        col = np.full(n, mean[i])
        for j in range(i + 1):
            col += z[:, j] * chol[i, j]
        out[:, i] = col
    return out


def write_bars_csv(path, series: list[BarSeries], with_session: bool = True) -> None:
    rows = []
    for s in series:
        for i in range(len(s)):
            row = [str(int(s.timestamps[i])), s.symbol, fmt(s.close[i]), fmt(s.volume[i])]
            if with_session:
                row.append(str(s.session_dates[i]))
            rows.append((int(s.timestamps[i]), row))
    rows.sort(key=lambda r: r[0])
    header = list(HEADER) + (["session_date"] if with_session else [])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for _, row in rows:
            fh.write(",".join(row) + "\n")


def synth_bar_series(symbol: str, log_returns_, start: int, spacing: int = DAY,
                     close0: float = 100.0, volume=None, per_session: int | None = None,
                     session_gap: int = DAY) -> BarSeries:
    """Bars whose log closes follow the cumulative sum of ``log_returns_``.

    With ``per_session`` set, bars are grouped into sessions of that many
    bars, ``spacing`` apart, and consecutive sessions start ``session_gap``
    apart.
    """
    r = np.asarray(log_returns_, dtype=np.float64)
    close = close0 * np.exp(np.concatenate([[0.0], np.cumsum(r)]))
    n = close.size
    if per_session is None:
        ts = start + spacing * np.arange(n, dtype=np.int64)
    else:
        k = np.arange(n, dtype=np.int64)
        ts = start + (k // per_session) * session_gap + (k % per_session) * spacing
    sessions = np.array([_utc_date(int(t)) for t in ts], dtype=object)
    vol = np.full(n, 1000.0) if volume is None else np.asarray(volume, dtype=np.float64)
    return BarSeries(symbol, ts, close, vol, sessions)
