"""Seeded multi-trial experiments relating transfer risk to realized
performance, plus the prediction and portfolio pipelines they run.

Configs are JSON objects.  Keys (defaults in brackets):

``kind``            "prediction" or "portfolio"
``synthetic``       [false] run the built-in Gaussian suite, no data needed
``trials``          [200] trials per frequency pair
``seed``            [0]
``data_dir``        directory of bar CSV files (real-data runs)
``universe``        {"source": [...], "target": [...]} symbol lists
``n_source``        [1 for prediction, 3 for portfolio] symbols drawn per role
``train_end``, ``test_end``   split dates
``lag`` [5], ``order`` [3], ``lambda_s`` [1.0], ``lambda_t`` [5.0]
``lambda`` [0.2], ``source_frequencies`` / ``target_frequencies`` [["1d"]]
``include_overnight`` [true], ``annualize`` [per-frequency default]
``output_dir``      ["experiment_out"]
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .data import (
    BarSeries,
    FREQUENCIES,
    align_and_split,
    fmt,
    inner_join,
    parse_bars,
    parse_date,
    synth_gaussian_samples,
)
from .divergence import GaussianDist
from .errors import ConfigError, ConstantSeries, DataMissing, EmptySplit, TooFewRows, TransferRiskError
from .gaussian import GaussianTask, expected_loss, optimal_linear_model, output_risk_w
from .portfolio import (
    Moments,
    OptimizerOptions,
    PortfolioRisk,
    annualization_factor,
    estimate_moments,
    max_sharpe,
    portfolio_transfer_risk,
    sharpe,
    transfer_portfolio,
)
from .ridge import MetricsReport, PredictionResult, evaluate, pearson, run_prediction
from .signature import build_feature_arrays

__all__ = ["pearson", "ExperimentConfig", "TrialRow", "run_trials", "summarize", "run_experiment"]

KINDS = ("prediction", "portfolio")
PREDICTION_COLUMNS = ("MSE", "-R2", "-Corr", "Transfer Risk")


# ---------------------------------------------------------------- config

@dataclass
class ExperimentConfig:
    kind: str
    trials: int = 200
    seed: int = 0
    synthetic: bool = False
    data_dir: str | None = None
    universe: dict = field(default_factory=dict)
    n_source: int | None = None
    train_end: str | None = None
    test_end: str | None = None
    lag: int = 5
    order: int = 3
    lambda_s: float = 1.0
    lambda_t: float = 5.0
    lam: float = 0.2
    source_frequencies: list = field(default_factory=lambda: ["1d"])
    target_frequencies: list = field(default_factory=lambda: ["1d"])
    include_overnight: bool = True
    annualize: float | None = None
    output_dir: str = "experiment_out"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if int(self.trials) < 1:
            raise ConfigError("trials must be >= 1")
        if self.n_source is None:
            self.n_source = 1 if self.kind == "prediction" else 3
        for f in [*self.source_frequencies, *self.target_frequencies]:
            if f not in FREQUENCIES:
                raise ConfigError(f"unknown frequency {f!r}")
        if not self.synthetic:
            for key in ("data_dir", "train_end", "test_end"):
                if getattr(self, key) is None:
                    raise ConfigError(f"{key} is required for real-data experiments")
            for role in ("source", "target"):
                if not self.universe.get(role):
                    raise ConfigError(f"universe.{role} must list at least one symbol")

    @classmethod
    def from_dict(cls, raw: dict, base_dir=None) -> "ExperimentConfig":
        raw = dict(raw)
        if "lambda" in raw:
            raw["lam"] = raw.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "kind" not in raw:
            raise ConfigError("config needs a 'kind'")
        cfg = cls(**raw)
        if base_dir is not None:
            base = FsPath(base_dir)
            if cfg.data_dir is not None:
                cfg.data_dir = str(base / cfg.data_dir)
            cfg.output_dir = str(base / cfg.output_dir)
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = FsPath(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw, base_dir=path.parent)

    def pairs(self) -> list[tuple[str, str]]:
        return [(s, t) for s in self.source_frequencies for t in self.target_frequencies]


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream keyed by a hash of ``(seed, index)``."""
    digest = hashlib.sha256(f"{int(seed)}:{int(index)}".encode()).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest[:16], "little")))


def thread_count() -> int:
    raw = os.environ.get("TRANSFER_RISK_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"TRANSFER_RISK_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ConfigError("TRANSFER_RISK_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


# ---------------------------------------------------------------- pipelines

def _labelled_features(series: BarSeries, lag: int, order: int):
    x, y, ts = build_feature_arrays(np.log(series.close), series.log_volume(), lag, order)
    # a row's target return is realized at bar t+1, which decides its split
    return x, y, series.timestamps[ts + 1]


def prediction_pipeline(sources: list[BarSeries], target: BarSeries, train_end, test_end,
                        lag: int = 5, order: int = 3, lambda_s: float = 1.0,
                        lambda_t: float = 5.0) -> tuple[PredictionResult, np.ndarray]:
    """Pretrain on pooled source windows, transfer to the target, score the test window.

    Returns the result and the timestamps of the test rows.
    """
    lo, hi = parse_date(train_end), parse_date(test_end)
    sx, sy = [], []
    for s in sources:
        x, y, ts = _labelled_features(s, lag, order)
        keep = ts < lo
        sx.append(x[keep])
        sy.append(y[keep])
    source_x, source_y = np.vstack(sx), np.concatenate(sy)
    x, y, ts = _labelled_features(target, lag, order)
    train = ts < lo
    test = (ts >= lo) & (ts < hi)
    if source_y.size == 0 or not train.any() or not test.any():
        raise EmptySplit(f"split leaves {source_y.size} source, {int(train.sum())} target-train, "
                         f"{int(test.sum())} test rows")
    res = run_prediction(source_x, source_y, x[train], y[train], x[test], y[test], lambda_s, lambda_t)
    return res, ts[test]


@dataclass
class PortfolioOutcome:
    symbols_source: list
    symbols_target: list
    phi_source: np.ndarray
    phi_direct: np.ndarray
    phi_transfer: np.ndarray
    source_sharpe: float
    direct_sharpe: float
    transfer_sharpe: float
    risk: PortfolioRisk
    regularized: bool


def portfolio_from_moments(m_source: Moments, m_target_train: Moments, m_target_test: Moments,
                           lam: float = 0.2, opts: OptimizerOptions | None = None,
                           symbols_source=(), symbols_target=()) -> PortfolioOutcome:
    opts = opts or OptimizerOptions()
    phi_s = max_sharpe(m_source, opts)
    phi_d = max_sharpe(m_target_train, opts)
    phi_t = transfer_portfolio(m_target_train, phi_s, lam, opts)
    return PortfolioOutcome(
        list(symbols_source), list(symbols_target), phi_s, phi_d, phi_t,
        sharpe(phi_s, m_source),
        sharpe(phi_d, m_target_test),
        sharpe(phi_t, m_target_test),
        portfolio_transfer_risk(m_source, phi_s, m_target_test),
        m_source.regularized or m_target_train.regularized or m_target_test.regularized,
    )


def portfolio_pipeline(sources: list[BarSeries], targets: list[BarSeries], train_end, test_end,
                       source_frequency: str = "1d", target_frequency: str = "1d", lam: float = 0.2,
                       annualize: float | None = None, include_overnight: bool = True,
                       opts: OptimizerOptions | None = None) -> PortfolioOutcome:
    """Source max-Sharpe portfolio, anchored target fine-tune, held-out scoring.

    Source moments come from the source train window; the target is tuned
    on its train window and scored on its test window.  The risk pairs the
    source train law with the target test law.
    """
    opts = opts or OptimizerOptions()
    if len(sources) != len(targets):
        raise ConfigError(f"{len(sources)} source assets vs {len(targets)} target assets")

    def moments(series, freq):
        # daily returns always span the overnight gap
        overnight = include_overnight or freq == "1d"
        train, test = align_and_split(series, train_end, test_end, freq, overnight)
        factor = annualize if annualize is not None else annualization_factor(freq)
        return (estimate_moments(train, factor, opts.ridge_eps),
                estimate_moments(test, factor, opts.ridge_eps))

    m_s, _ = moments(sources, source_frequency)
    m_tt, m_te = moments(targets, target_frequency)
    return portfolio_from_moments(m_s, m_tt, m_te, lam, opts,
                                  [s.symbol for s in sources], [t.symbol for t in targets])


# ---------------------------------------------------------------- synthetic suites

SYN_DIM = 3
SYN_SAMPLES = 2000


def _synthetic_target_task() -> GaussianTask:
    rng = np.random.Generator(np.random.Philox(key=20240611))
    a = rng.standard_normal((SYN_DIM, SYN_DIM))
    sigma_x = a @ a.T / SYN_DIM + 0.5 * np.eye(SYN_DIM)
    w = np.array([1.0, -0.5, 0.25])
    noise = 0.25
    return GaussianTask(np.zeros(SYN_DIM), [0.0], sigma_x, (sigma_x @ w)[:, None],
                        [[w @ sigma_x @ w + noise]])


def _task_with(base: GaussianTask, w, mu_x, mu_y, noise: float) -> GaussianTask:
    w = np.asarray(w, dtype=np.float64)
    sx = base.sigma_x
    return GaussianTask(mu_x, [mu_y], sx, (sx @ w)[:, None], [[w @ sx @ w + noise]])


def _estimate_task(samples: np.ndarray) -> GaussianTask:
    return GaussianTask.from_joint(samples.mean(axis=0), np.cov(samples.T, ddof=1), SYN_DIM)


def synthetic_prediction_trial(index: int, rng: np.random.Generator, target: GaussianTask) -> dict:
    """A source at graded distance from ``target``; risk from samples, regret exact.

    The distance grade ``g ~ U(0, 1)`` scales both a coefficient perturbation
    and a mean shift of the source outputs.
    """
    g = rng.uniform()
    w_t = optimal_linear_model(target).w[0]
    direction = rng.standard_normal(SYN_DIM)
    direction /= np.linalg.norm(direction)
    source = _task_with(target, w_t + 0.8 * g * direction, target.mu_x, 1.5 * g, 0.25)
    s_hat = _estimate_task(synth_gaussian_samples(source, SYN_SAMPLES, rng.integers(2**63)))
    t_hat = _estimate_task(synth_gaussian_samples(target, SYN_SAMPLES, rng.integers(2**63)))
    risk = output_risk_w(s_hat, t_hat).total
    f_s = optimal_linear_model(s_hat)
    f_t = optimal_linear_model(target)
    reg = expected_loss(f_s, target) - expected_loss(f_t, target)
    test = synth_gaussian_samples(target, SYN_SAMPLES, rng.integers(2**63))
    pred = test[:, :SYN_DIM] @ f_s.w[0] + f_s.b[0]
    transfer = evaluate(pred, test[:, SYN_DIM])
    direct_pred = test[:, :SYN_DIM] @ f_t.w[0] + f_t.b[0]
    direct = evaluate(direct_pred, test[:, SYN_DIM])
    return {
        "sources": f"grade={fmt(g)}",
        "target": "synthetic",
        "transfer_risk": risk,
        "regret": reg,
        **_metric_fields("direct", direct),
        **_metric_fields("transfer", transfer),
    }


PORT_MU = np.array([0.12, 0.04, 0.0])
PORT_VOL = np.array([0.15, 0.15, 0.15])
PORT_CORR = np.array([[1.0, 0.3, 0.1], [0.3, 1.0, 0.2], [0.1, 0.2, 1.0]])
PORT_SHIFT = np.array([-0.12, 0.0, 0.0])
PORT_SOURCE = 2000
PORT_TRAIN = 500
PORT_TEST = 20000


def synthetic_portfolio_trial(index: int, rng: np.random.Generator, lam: float) -> dict:
    """Source returns at graded distance from a fixed target return law.

    The grade ``g ~ U(0, 1)`` lowers the source mean of the asset the target
    rewards most, so the source Sharpe falls, the source law moves away from
    the target, and the pretrained anchor drifts off the target optimum.
    """
    g = rng.uniform()
    sigma = np.outer(PORT_VOL, PORT_VOL) * PORT_CORR
    src = synth_gaussian_samples(GaussianDist(PORT_MU + g * PORT_SHIFT, sigma), PORT_SOURCE, rng.integers(2**63))
    tgt = synth_gaussian_samples(GaussianDist(PORT_MU, sigma), PORT_TRAIN + PORT_TEST, rng.integers(2**63))
    out = portfolio_from_moments(
        estimate_moments(src.T), estimate_moments(tgt[:PORT_TRAIN].T), estimate_moments(tgt[PORT_TRAIN:].T), lam)
    return {"sources": f"grade={fmt(g)}", "target": "synthetic", **_portfolio_fields(out)}


# ---------------------------------------------------------------- trials

def _metric_fields(prefix: str, m: MetricsReport) -> dict:
    return {f"{prefix}_mse": m.mse, f"{prefix}_r2": m.r2, f"{prefix}_corr": m.corr}


def _portfolio_fields(out: PortfolioOutcome) -> dict:
    return {
        "transfer_risk": out.risk.total,
        "r1": out.risk.r1,
        "r2": out.risk.r2,
        "source_sharpe": out.source_sharpe,
        "direct_sharpe": out.direct_sharpe,
        "transfer_sharpe": out.transfer_sharpe,
    }


TRIAL_COLUMNS = {
    "prediction": ("transfer_risk", "regret", "direct_mse", "direct_r2", "direct_corr",
                   "transfer_mse", "transfer_r2", "transfer_corr"),
    "portfolio": ("transfer_risk", "r1", "r2", "source_sharpe", "direct_sharpe", "transfer_sharpe"),
}


@dataclass
class TrialRow:
    trial_index: int
    sources: str
    target: str
    values: dict
    ok: bool = True
    error: str = ""

    def get(self, key: str) -> float:
        return float(self.values[key])


def load_universe(cfg: ExperimentConfig) -> dict[str, BarSeries]:
    root = FsPath(cfg.data_dir)
    if not root.is_dir():
        raise DataMissing(f"data directory {root} not found")
    bars: dict[str, BarSeries] = {}
    for path in sorted(root.glob("*.csv")):
        for sym, s in parse_bars(path).items():
            if sym in bars:
                raise DataMissing(f"symbol {sym} appears in more than one file")
            bars[sym] = s
    needed = [*cfg.universe["source"], *cfg.universe["target"]]
    missing = [s for s in needed if s not in bars]
    if missing:
        raise DataMissing(f"symbols not found in {root}: {', '.join(missing)}")
    return bars


def _pick(rng: np.random.Generator, pool: list, k: int) -> list:
    if k > len(pool):
        raise ConfigError(f"cannot draw {k} symbols from a pool of {len(pool)}")
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[i] for i in sorted(idx)]


def _real_trial(cfg: ExperimentConfig, bars: dict, rng: np.random.Generator, pair) -> dict:
    src_syms = _pick(rng, list(cfg.universe["source"]), cfg.n_source)
    if cfg.kind == "prediction":
        tgt_sym = _pick(rng, list(cfg.universe["target"]), 1)[0]
        res, _ = prediction_pipeline([bars[s] for s in src_syms], bars[tgt_sym], cfg.train_end, cfg.test_end,
                                     cfg.lag, cfg.order, cfg.lambda_s, cfg.lambda_t)
        return {
            "sources": " ".join(src_syms),
            "target": tgt_sym,
            "transfer_risk": res.transfer_risk,
            "regret": res.transfer_metrics.mse - res.direct_metrics.mse,
            **_metric_fields("direct", res.direct_metrics),
            **_metric_fields("transfer", res.transfer_metrics),
        }
    tgt_syms = _pick(rng, list(cfg.universe["target"]), cfg.n_source)
    out = portfolio_pipeline([bars[s] for s in src_syms], [bars[s] for s in tgt_syms], cfg.train_end, cfg.test_end,
                             pair[0], pair[1], cfg.lam, cfg.annualize, cfg.include_overnight)
    return {"sources": f"{pair[0]}:" + " ".join(src_syms), "target": pair[1], **_portfolio_fields(out)}


def _run_one(cfg: ExperimentConfig, bars, target_task, index: int, pair) -> TrialRow:
    rng = trial_rng(cfg.seed, index)
    try:
        if not cfg.synthetic:
            rec = _real_trial(cfg, bars, rng, pair)
        elif cfg.kind == "prediction":
            rec = synthetic_prediction_trial(index, rng, target_task)
        else:
            rec = synthetic_portfolio_trial(index, rng, cfg.lam)
    except (TransferRiskError, np.linalg.LinAlgError) as exc:
        return TrialRow(index, "", "", {}, ok=False, error=f"{type(exc).__name__}: {exc}")
    values = {k: float(rec[k]) for k in TRIAL_COLUMNS[cfg.kind]}
    if not all(math.isfinite(v) for v in values.values()):
        return TrialRow(index, rec["sources"], rec["target"], {}, ok=False, error="non-finite result")
    return TrialRow(index, rec["sources"], rec["target"], values)


def run_trials(cfg: ExperimentConfig, threads: int | None = None) -> list[TrialRow]:
    """All trials, ordered by index; failed trials are kept with ``ok=False``.

    Trial ``i`` of frequency pair ``p`` has index ``p * trials + i`` and its
    own random stream, so results do not depend on scheduling.
    """
    bars = None if cfg.synthetic else load_universe(cfg)
    target_task = _synthetic_target_task() if cfg.synthetic else None
    jobs = [(p * cfg.trials + i, pair) for p, pair in enumerate(cfg.pairs()) for i in range(cfg.trials)]
    threads = threads or thread_count()
    if threads <= 1:
        rows = [_run_one(cfg, bars, target_task, idx, pair) for idx, pair in jobs]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(lambda job: _run_one(cfg, bars, target_task, *job), jobs))
    return sorted(rows, key=lambda r: r.trial_index)


# ---------------------------------------------------------------- summaries

def _safe_pearson(xs, ys) -> float:
    try:
        return pearson(xs, ys)
    except ConstantSeries:
        return float("nan")


@dataclass
class Summary:
    kind: str
    n_trials: int
    n_failed: int
    columns: tuple
    matrix: list | None = None
    per_target: list | None = None
    extra: dict = field(default_factory=dict)

    @property
    def failure_rate(self) -> float:
        return self.n_failed / self.n_trials if self.n_trials else 0.0


def summarize(rows: list[TrialRow], kind: str = "prediction") -> Summary:
    """Correlation summary of successful rows.

    Prediction: 4x4 Pearson matrix over (MSE, -R2, -Corr, Transfer Risk) of
    the transferred model.  Portfolio: corr(transfer risk, held-out Sharpe)
    for each target label.
    """
    good = [r for r in rows if r.ok]
    if len(good) < 2:
        raise TooFewRows(f"need at least 2 successful trials, got {len(good)}")
    failed = len(rows) - len(good)
    if kind == "prediction":
        cols = [
            [r.get("transfer_mse") for r in good],
            [-r.get("transfer_r2") for r in good],
            [-r.get("transfer_corr") for r in good],
            [r.get("transfer_risk") for r in good],
        ]
        matrix = [[1.0 if i == j else _safe_pearson(cols[i], cols[j]) for j in range(4)] for i in range(4)]
        extra = {"corr_risk_regret": _safe_pearson(cols[3], [r.get("regret") for r in good])}
        return Summary(kind, len(rows), failed, PREDICTION_COLUMNS, matrix=matrix, extra=extra)
    targets = sorted({r.target for r in good}, key=lambda t: (FREQUENCIES.index(t) if t in FREQUENCIES else len(FREQUENCIES), t))
    per_target = []
    for t in targets:
        sel = [r for r in good if r.target == t]
        corr = _safe_pearson([r.get("transfer_risk") for r in sel], [r.get("transfer_sharpe") for r in sel]) \
            if len(sel) >= 2 else float("nan")
        per_target.append((t, len(sel), corr))
    return Summary(kind, len(rows), failed, ("target", "n", "corr_risk_sharpe"), per_target=per_target)


def _cell(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else fmt(v)
    return str(v)


def _json_num(v):
    if isinstance(v, float):
        return None if math.isnan(v) else float(fmt(v))
    return v


def trials_csv(rows: list[TrialRow], kind: str) -> str:
    cols = TRIAL_COLUMNS[kind]
    lines = [",".join(("trial_index", "status", "sources", "target", *cols, "error"))]
    for r in rows:
        vals = [fmt(r.values[c]) if r.ok else "" for c in cols]
        err = r.error.replace(",", ";").replace("\n", " ")
        lines.append(",".join((str(r.trial_index), "ok" if r.ok else "failed", r.sources, r.target, *vals, err)))
    return "\n".join(lines) + "\n"


def summary_csv(s: Summary) -> str:
    if s.kind == "prediction":
        lines = [",".join(("metric", *s.columns))]
        for name, row in zip(s.columns, s.matrix):
            lines.append(",".join((name, *(_cell(v) for v in row))))
    else:
        lines = [",".join(s.columns)]
        for t, n, c in s.per_target:
            lines.append(",".join((t, str(n), _cell(c))))
    return "\n".join(lines) + "\n"


def summary_json(s: Summary) -> str:
    doc = {"kind": s.kind, "n_trials": s.n_trials, "n_failed": s.n_failed}
    if s.kind == "prediction":
        doc["columns"] = list(s.columns)
        doc["correlation"] = [[_json_num(v) for v in row] for row in s.matrix]
    else:
        doc["per_target"] = [{"target": t, "n": n, "corr_risk_sharpe": _json_num(c)} for t, n, c in s.per_target]
    for k, v in s.extra.items():
        doc[k] = _json_num(v)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> tuple[list[TrialRow], Summary | None]:
    """Run, summarize and write ``trials.csv``, ``summary.csv``, ``summary.json``."""
    rows = run_trials(cfg, threads)
    out = FsPath(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trials.csv").write_text(trials_csv(rows, cfg.kind))
    try:
        summary = summarize(rows, cfg.kind)
    except TooFewRows:
        failed = sum(not r.ok for r in rows)
        (out / "summary.json").write_text(json.dumps(
            {"kind": cfg.kind, "n_trials": len(rows), "n_failed": failed}, indent=2, sort_keys=True) + "\n")
        return rows, None
    (out / "summary.csv").write_text(summary_csv(summary))
    (out / "summary.json").write_text(summary_json(summary))
    return rows, summary
