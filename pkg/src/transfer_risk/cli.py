"""Command-line entry point: ``transfer-risk <subcommand> [flags]``.

Exit status is 0 on success, 2 on a usage error and 1 on a runtime error,
which is reported as one line on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .data import FREQUENCIES, fmt, parse_bars
from .errors import ConfigError, TransferRiskError
from .experiments import (
    ExperimentConfig,
    portfolio_pipeline,
    prediction_pipeline,
    run_experiment,
    summary_json,
)
from .gaussian import (
    AugmentedTargetTask,
    GaussianTask,
    LinearModel,
    feature_augmented_risk,
    output_augmented_risk,
    risk_report,
)
from .portfolio import OptimizerOptions
from .signature import Path, path_signature

FAR_FUTURE = "9999-12-31"


@dataclass
class CommandSpec:
    subcommand: str
    args: argparse.Namespace


def _num(v):
    """Round floats to 12 significant digits for JSON output."""
    if isinstance(v, dict):
        return {k: _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if not math.isfinite(v) else float(fmt(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def _dump(doc) -> str:
    return json.dumps(_num(doc), indent=2, sort_keys=True) + "\n"


def _emit(text: str, out) -> None:
    if out:
        FsPath(out).write_text(text)
    else:
        sys.stdout.write(text)


def _decomp(r) -> dict:
    return {"variance": r.variance_term, "bias": r.bias_term, "total": r.total}


# ---------------------------------------------------------------- handlers

def cmd_gaussian_risk(a) -> int:
    try:
        spec = json.loads(FsPath(a.spec).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{a.spec}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
    for key in ("source", "target"):
        if key not in spec:
            raise ConfigError(f"{a.spec}: missing '{key}' task")
    source = GaussianTask.from_dict(spec["source"])
    target_spec = spec["target"]
    if "augment" in target_spec:
        aug = AugmentedTargetTask.from_dict(GaussianTask.from_dict(target_spec), target_spec["augment"])
        if aug.mode == "feature":
            doc = {"mode": "feature",
                   "risk_kl": _decomp(feature_augmented_risk(source, aug, "kl")),
                   "risk_w": _decomp(feature_augmented_risk(source, aug, "w2"))}
        else:
            init = spec.get("init")
            if init is None:
                raise ConfigError("output augmentation needs an 'init' model {w, b}")
            model = LinearModel(init["w"], init["b"])
            doc = {"mode": "output",
                   "risk_kl": _decomp(output_augmented_risk(source, aug, model, "kl")),
                   "risk_w": _decomp(output_augmented_risk(source, aug, model, "w2"))}
    else:
        doc = risk_report(source, GaussianTask.from_dict(target_spec))
    _emit(_dump(doc), a.out)
    return 0


def _read_path_csv(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            cells = [c.strip() for c in line.strip().split(",")]
            if not line.strip():
                continue
            try:
                rows.append([float(c) for c in cells])
            except ValueError:
                if rows or lineno > 1:
                    raise ConfigError(f"{path}: line {lineno}: non-numeric value") from None
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1 or len(rows[0]) < 2:
        raise ConfigError(f"{path}: need a time column and at least one value column on every row")
    return np.asarray(rows)


def cmd_signature(a) -> int:
    table = _read_path_csv(a.input)
    sig = path_signature(Path(table[:, 0], table[:, 1:]), a.order)
    text = ",".join(sig.headers()) + "\n" + ",".join(fmt(v) for v in sig.features()) + "\n"
    _emit(text, a.out)
    return 0


def _load_series(paths) -> list:
    out = []
    for p in paths:
        out.extend(s for _, s in sorted(parse_bars(p).items()))
    return out


def cmd_predict(a) -> int:
    sources = _load_series(a.source)
    targets = _load_series([a.target])
    if a.target_symbol:
        targets = [s for s in targets if s.symbol == a.target_symbol]
    if len(targets) != 1:
        raise ConfigError(f"target file must hold exactly one symbol (use --target-symbol), found {len(targets)}")
    target = targets[0]
    res, ts = prediction_pipeline(sources, target, a.train_end, a.test_end or FAR_FUTURE,
                                  a.lag, a.order, a.lambda_s, a.lambda_t)
    out = FsPath(a.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "target": target.symbol,
        "sources": [s.symbol for s in sources],
        "lag": a.lag,
        "order": a.order,
        "lambda_s": a.lambda_s,
        "lambda_t": a.lambda_t,
        "n_test": int(ts.size),
        "transfer_risk": res.transfer_risk,
        "direct": vars(res.direct_metrics),
        "transfer": vars(res.transfer_metrics),
    }
    (out / "metrics.json").write_text(_dump(doc))
    lines = ["timestamp,actual,direct,transfer"]
    for i in range(ts.size):
        lines.append(",".join((str(int(ts[i])), fmt(res.actuals[i]),
                               fmt(res.direct_predictions[i]), fmt(res.transfer_predictions[i]))))
    (out / "predictions.csv").write_text("\n".join(lines) + "\n")
    return 0


def cmd_portfolio(a) -> int:
    sources = _load_series([a.source])
    targets = _load_series([a.target])
    opts = OptimizerOptions(restarts=a.restarts, seed=a.seed)
    res = portfolio_pipeline(sources, targets, a.train_end, a.test_end, a.source_freq or a.freq, a.freq,
                             a.lam, a.annualize, not a.no_overnight, opts)
    doc = {
        "source_symbols": res.symbols_source,
        "target_symbols": res.symbols_target,
        "frequency": a.freq,
        "source_frequency": a.source_freq or a.freq,
        "lambda": a.lam,
        "weights": {
            "source": res.phi_source.tolist(),
            "direct": res.phi_direct.tolist(),
            "transfer": res.phi_transfer.tolist(),
        },
        "sharpe": {
            "source_train": res.source_sharpe,
            "direct_test": res.direct_sharpe,
            "transfer_test": res.transfer_sharpe,
        },
        "risk": {"r1": res.risk.r1, "r2": res.risk.r2, "total": res.risk.total},
        "regularized_covariance": res.regularized,
    }
    text = _dump(doc)
    if a.out:
        out = FsPath(a.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "portfolio.json").write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_experiment(a) -> int:
    cfg = ExperimentConfig.load(a.config)
    if a.out:
        cfg.output_dir = a.out
    rows, summary = run_experiment(cfg, a.threads)
    failed = sum(not r.ok for r in rows)
    if summary is not None:
        sys.stdout.write(summary_json(summary))
    if failed * 2 > len(rows):
        print(f"transfer-risk: error: {failed} of {len(rows)} trials failed", file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    fmt_cls = argparse.ArgumentDefaultsHelpFormatter
    p = argparse.ArgumentParser(prog="transfer-risk", description="Transfer-risk toolkit.", formatter_class=fmt_cls)
    sub = p.add_subparsers(dest="subcommand", metavar="SUBCOMMAND", required=True)

    g = sub.add_parser("gaussian-risk", help="closed-form risks and regret for Gaussian tasks", formatter_class=fmt_cls)
    g.add_argument("--spec", required=True, help="JSON file with 'source' and 'target' tasks")
    g.add_argument("--out", default=None, help="write the report here instead of stdout")
    g.set_defaults(func=cmd_gaussian_risk)

    s = sub.add_parser("signature", help="truncated signature of a piecewise-linear path", formatter_class=fmt_cls)
    s.add_argument("--input", required=True, help="CSV of time,value... rows (optional header)")
    s.add_argument("--order", type=int, default=3, help="truncation order M")
    s.add_argument("--out", default=None, help="write the CSV here instead of stdout")
    s.set_defaults(func=cmd_signature)

    r = sub.add_parser("predict", help="signature ridge prediction with source pretraining", formatter_class=fmt_cls)
    r.add_argument("--source", nargs="+", required=True, help="bar CSV file(s) of source symbols")
    r.add_argument("--target", required=True, help="bar CSV file of the target symbol")
    r.add_argument("--target-symbol", default=None, help="pick this symbol from the target file")
    r.add_argument("--lag", type=int, default=5, help="window length L")
    r.add_argument("--order", type=int, default=3, help="signature order M")
    r.add_argument("--lambda-s", type=float, default=1.0, help="source ridge penalty")
    r.add_argument("--lambda-t", type=float, default=5.0, help="transfer penalty toward the source weights")
    r.add_argument("--train-end", required=True, help="split date: earlier rows train, later rows test")
    r.add_argument("--test-end", default=None, help="end of the test window (exclusive); open if omitted")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_predict)

    q = sub.add_parser("portfolio", help="max-Sharpe transfer portfolio and its transfer risk", formatter_class=fmt_cls)
    q.add_argument("--source", required=True, help="bar CSV of source assets")
    q.add_argument("--target", required=True, help="bar CSV of target assets (same count, matched by sorted symbol)")
    q.add_argument("--freq", default="1d", choices=FREQUENCIES, help="target return frequency")
    q.add_argument("--source-freq", default=None, choices=FREQUENCIES, help="source return frequency; same as --freq if omitted")
    q.add_argument("--lambda", dest="lam", type=float, default=0.2, help="anchor penalty")
    q.add_argument("--annualize", type=float, default=None, help="annualization factor; per-frequency value if omitted")
    q.add_argument("--no-overnight", action="store_true", help="drop intraday returns spanning sessions")
    q.add_argument("--train-end", required=True, help="split date: earlier rows train, later rows test")
    q.add_argument("--test-end", required=True, help="end of the test window (exclusive)")
    q.add_argument("--restarts", type=int, default=8, help="random optimizer restarts")
    q.add_argument("--seed", type=int, default=0, help="seed for restart points")
    q.add_argument("--out", default=None, help="output directory (stdout if omitted)")
    q.set_defaults(func=cmd_portfolio)

    e = sub.add_parser("experiment", help="run a seeded multi-trial experiment", formatter_class=fmt_cls)
    e.add_argument("--config", required=True, help="JSON experiment config")
    e.add_argument("--threads", type=int, default=None, help="worker threads; TRANSFER_RISK_THREADS if omitted, 0 = auto")
    e.add_argument("--out", default=None, help="override the config's output directory")
    e.set_defaults(func=cmd_experiment)
    return p


def parse_command(argv) -> CommandSpec:
    ns = build_parser().parse_args(argv)
    return CommandSpec(ns.subcommand, ns)


def run_command(argv=None) -> int:
    try:
        cmd = parse_command(sys.argv[1:] if argv is None else list(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return cmd.args.func(cmd.args)
    except (TransferRiskError, OSError, KeyError, TypeError, OverflowError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        if isinstance(exc, KeyError):
            msg = f"missing key {exc}"
        print(f"transfer-risk: error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
