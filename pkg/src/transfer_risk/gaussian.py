"""Closed-form transfer risk and regret for jointly Gaussian linear regression.

A task is a joint normal law of ``(X, Y)`` stored in blocks.  The pretrained
model is the population least-squares fit on the source task; risks compare
the law of its predictions on target inputs (``P_ST``) with the law of the
optimal target predictions (``P_T``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .divergence import (
    Gaussian1D,
    GaussianDist,
    bures_trace,
)
from .errors import (
    DegenerateOutputCovariance,
    DimensionMismatch,
    NotSPD,
    StructureMismatch,
    ZeroPretrainedSignal,
)
from .spd import check_spd, spd_logdet, spd_solve, spd_tolerance

Kind = Literal["kl", "w2"]


def _vec(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=np.float64)).ravel()


def _mat(x, rows: int, cols: int, name: str) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim <= 1:
        a = a.reshape(rows, cols)
    if a.shape != (rows, cols):
        raise DimensionMismatch(f"{name} must be {rows}x{cols}, got {a.shape}")
    return a


@dataclass(frozen=True, eq=False)
class GaussianTask:
    """Joint normal law of inputs ``X`` (dim d) and outputs ``Y`` (dim l)."""

    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_x: np.ndarray
    sigma_xy: np.ndarray
    sigma_y: np.ndarray

    def __post_init__(self):
        mu_x, mu_y = _vec(self.mu_x), _vec(self.mu_y)
        d, l = mu_x.size, mu_y.size
        sigma_x = _mat(self.sigma_x, d, d, "sigma_x")
        sigma_xy = _mat(self.sigma_xy, d, l, "sigma_xy")
        sigma_y = _mat(self.sigma_y, l, l, "sigma_y")
        sigma_x = 0.5 * (sigma_x + sigma_x.T)
        sigma_y = 0.5 * (sigma_y + sigma_y.T)
        for name, val in (("mu_x", mu_x), ("mu_y", mu_y), ("sigma_x", sigma_x),
                          ("sigma_xy", sigma_xy), ("sigma_y", sigma_y)):
            object.__setattr__(self, name, val)
        check_spd(self.joint_cov())

    @property
    def dim_x(self) -> int:
        return self.mu_x.size

    @property
    def dim_y(self) -> int:
        return self.mu_y.size

    def joint_mean(self) -> np.ndarray:
        return np.concatenate([self.mu_x, self.mu_y])

    def joint_cov(self) -> np.ndarray:
        return np.block([[self.sigma_x, self.sigma_xy], [self.sigma_xy.T, self.sigma_y]])

    def joint_law(self) -> GaussianDist:
        return GaussianDist(self.joint_mean(), self.joint_cov())

    def input_law(self) -> GaussianDist:
        return GaussianDist(self.mu_x, self.sigma_x)

    @classmethod
    def from_joint(cls, mean, cov, dim_x: int) -> "GaussianTask":
        mean = _vec(mean)
        cov = np.asarray(cov, dtype=np.float64)
        d = dim_x
        return cls(mean[:d], mean[d:], cov[:d, :d], cov[:d, d:], cov[d:, d:])

    @classmethod
    def from_dict(cls, spec: dict) -> "GaussianTask":
        task = cls(spec["mu_x"], spec["mu_y"], spec["sigma_x"], spec["sigma_xy"], spec["sigma_y"])
        if "dim_x" in spec and int(spec["dim_x"]) != task.dim_x:
            raise DimensionMismatch(f"dim_x={spec['dim_x']} disagrees with mu_x")
        if "dim_y" in spec and int(spec["dim_y"]) != task.dim_y:
            raise DimensionMismatch(f"dim_y={spec['dim_y']} disagrees with mu_y")
        return task

    def to_dict(self) -> dict:
        return {
            "dim_x": self.dim_x,
            "dim_y": self.dim_y,
            "mu_x": self.mu_x.tolist(),
            "mu_y": self.mu_y.tolist(),
            "sigma_x": self.sigma_x.tolist(),
            "sigma_xy": self.sigma_xy.tolist(),
            "sigma_y": self.sigma_y.tolist(),
        }


@dataclass(frozen=True, eq=False)
class LinearModel:
    """Affine map ``y = w @ x + b`` with ``w`` of shape (l, d)."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.w, dtype=np.float64))
        b = _vec(self.b)
        if w.shape[0] != b.size:
            raise DimensionMismatch(f"w has {w.shape[0]} rows but b has length {b.size}")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", b)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x) @ self.w.T + self.b


@dataclass(frozen=True)
class RiskDecomposition:
    variance_term: float
    bias_term: float
    total: float

    @classmethod
    def of(cls, variance_term: float, bias_term: float) -> "RiskDecomposition":
        return cls(float(variance_term), float(bias_term), float(variance_term + bias_term))


@dataclass(frozen=True)
class RegretReport:
    regret: float
    risk_w: float
    residual: float
    regret_variance: float = 0.0
    regret_bias: float = 0.0


def h(x: float) -> float:
    """``(x - log x - 1) / 2``; zero only at 1."""
    return 0.5 * (x - math.log(x) - 1.0)


def optimal_linear_model(task: GaussianTask) -> LinearModel:
    """Population least-squares fit ``E[Y | X]`` of a task."""
    coef = spd_solve(task.sigma_x, task.sigma_xy)  # d x l
    w = coef.T
    return LinearModel(w, task.mu_y - w @ task.mu_x)


def expected_loss(model: LinearModel, task: GaussianTask) -> float:
    """``E ||Y - f(X)||^2`` under the task's joint law."""
    if model.w.shape != (task.dim_y, task.dim_x):
        raise DimensionMismatch(f"model is {model.w.shape}, task needs {(task.dim_y, task.dim_x)}")
    w = model.w
    resid_mean = task.mu_y - w @ task.mu_x - model.b
    cov_term = np.trace(task.sigma_y) - 2.0 * np.trace(w @ task.sigma_xy) + np.trace(w @ task.sigma_x @ w.T)
    return float(resid_mean @ resid_mean + cov_term)


def pushforward_law(model: LinearModel, law: GaussianDist) -> GaussianDist:
    if model.w.shape[1] != law.dim:
        raise DimensionMismatch(f"model expects dim {model.w.shape[1]}, law has dim {law.dim}")
    cov = model.w @ law.cov @ model.w.T
    try:
        return GaussianDist(model.w @ law.mean + model.b, cov)
    except NotSPD as exc:
        raise DegenerateOutputCovariance(f"pushforward covariance is degenerate: {exc}") from None


def _scalar_pair(source: GaussianTask, target: GaussianTask):
    if source.dim_y != 1 or target.dim_y != 1:
        raise DimensionMismatch("scalar-output tasks required (dim_y == 1)")
    if source.dim_x != target.dim_x:
        raise DimensionMismatch(f"input dims differ: {source.dim_x} vs {target.dim_x}")
    fs = optimal_linear_model(source)
    ft = optimal_linear_model(target)
    w_s, w_t = fs.w[0], ft.w[0]
    sig = target.sigma_x
    st_var = float(w_s @ sig @ w_s)
    t_var = float(w_t @ sig @ w_t)
    cross = float(w_t @ sig @ w_s)
    shift = float(target.mu_y[0] - source.mu_y[0] - w_s @ (target.mu_x - source.mu_x))
    return fs, ft, st_var, t_var, cross, shift


def transfer_laws(source: GaussianTask, target: GaussianTask) -> tuple[Gaussian1D, Gaussian1D]:
    """``(P_T, P_ST)``: optimal-target and pretrained-model output laws on target inputs."""
    fs, ft, st_var, t_var, _, _ = _scalar_pair(source, target)
    mean_t = float(ft.w[0] @ target.mu_x + ft.b[0])
    mean_st = float(fs.w[0] @ target.mu_x + fs.b[0])
    return Gaussian1D(mean_t, t_var), Gaussian1D(mean_st, st_var)


def output_risk_kl(source: GaussianTask, target: GaussianTask) -> RiskDecomposition:
    """KL(P_T || P_ST) split into variance and bias parts."""
    _, _, st_var, t_var, _, shift = _scalar_pair(source, target)
    if st_var <= spd_tolerance(target.sigma_x):
        raise ZeroPretrainedSignal("pretrained predictions have zero variance on target inputs")
    if t_var <= spd_tolerance(target.sigma_x):
        raise DegenerateOutputCovariance("optimal target predictions have zero variance")
    return RiskDecomposition.of(h(t_var / st_var), shift * shift / (2.0 * st_var))


def output_risk_w(source: GaussianTask, target: GaussianTask) -> RiskDecomposition:
    """Squared 2-Wasserstein distance between P_ST and P_T, split in two."""
    _, _, st_var, t_var, _, shift = _scalar_pair(source, target)
    return RiskDecomposition.of((math.sqrt(st_var) - math.sqrt(t_var)) ** 2, shift * shift)


def regret(source: GaussianTask, target: GaussianTask) -> RegretReport:
    """Excess target loss of the pretrained model, with its risk/residual split."""
    _, _, st_var, t_var, cross, shift = _scalar_pair(source, target)
    gap = st_var + t_var - 2.0 * cross  # ||Sigma^1/2 (w_T - w_S)||^2
    risk_w = (math.sqrt(st_var) - math.sqrt(t_var)) ** 2 + shift * shift
    residual = 2.0 * (math.sqrt(t_var) * math.sqrt(st_var) - cross)
    return RegretReport(
        regret=gap + shift * shift,
        risk_w=risk_w,
        residual=residual,
        regret_variance=gap,
        regret_bias=shift * shift,
    )


@dataclass(frozen=True, eq=False)
class AugmentedTargetTask:
    """Target task that extends a source-aligned base block by ``k`` dimensions.

    ``mode="feature"`` appends ``k`` input features; ``mode="output"`` appends
    ``k`` outputs.  ``sigma_add_x`` is Cov(base inputs, added block) (d x k),
    ``sigma_add`` is Var(added block) (k x k) and ``sigma_add_y`` is
    Cov(added block, base outputs) (k x l).
    """

    base: GaussianTask
    mu_add: np.ndarray
    sigma_add_x: np.ndarray
    sigma_add: np.ndarray
    sigma_add_y: np.ndarray
    mode: Literal["feature", "output"] = "feature"

    def __post_init__(self):
        if self.mode not in ("feature", "output"):
            raise ValueError(f"unknown augmentation mode {self.mode!r}")
        mu_add = _vec(self.mu_add)
        k, d, l = mu_add.size, self.base.dim_x, self.base.dim_y
        object.__setattr__(self, "mu_add", mu_add)
        object.__setattr__(self, "sigma_add_x", _mat(self.sigma_add_x, d, k, "sigma_add_x"))
        sa = _mat(self.sigma_add, k, k, "sigma_add")
        object.__setattr__(self, "sigma_add", 0.5 * (sa + sa.T))
        object.__setattr__(self, "sigma_add_y", _mat(self.sigma_add_y, k, l, "sigma_add_y"))
        self.joint_task()

    @property
    def added_dim(self) -> int:
        return self.mu_add.size

    def joint_task(self) -> GaussianTask:
        b = self.base
        if self.mode == "feature":
            return GaussianTask(
                np.concatenate([b.mu_x, self.mu_add]),
                b.mu_y,
                np.block([[b.sigma_x, self.sigma_add_x], [self.sigma_add_x.T, self.sigma_add]]),
                np.vstack([b.sigma_xy, self.sigma_add_y]),
                b.sigma_y,
            )
        return GaussianTask(
            b.mu_x,
            np.concatenate([b.mu_y, self.mu_add]),
            b.sigma_x,
            np.hstack([b.sigma_xy, self.sigma_add_x]),
            np.block([[b.sigma_y, self.sigma_add_y.T], [self.sigma_add_y, self.sigma_add]]),
        )

    @classmethod
    def from_dict(cls, base: GaussianTask, spec: dict) -> "AugmentedTargetTask":
        return cls(
            base,
            spec["mu_add"],
            spec["sigma_add_x"],
            spec["sigma_add"],
            spec["sigma_add_y"],
            mode=spec.get("mode", "feature"),
        )


def _check_base(source: GaussianTask, target: AugmentedTargetTask, mode: str):
    if target.mode != mode:
        raise StructureMismatch(f"expected a {mode}-augmented target, got {target.mode}")
    b = target.base
    same = (
        b.dim_x == source.dim_x
        and b.dim_y == source.dim_y
        and np.allclose(b.joint_mean(), source.joint_mean(), rtol=0, atol=1e-12)
        and np.allclose(b.joint_cov(), source.joint_cov(), rtol=0, atol=1e-12)
    )
    if not same:
        raise StructureMismatch("target base block must reproduce the source task")


def feature_augmented_risk(source: GaussianTask, target: AugmentedTargetTask, kind: Kind = "kl") -> RiskDecomposition:
    """Risk of reusing the source model on the first d target features.

    The input transport is the coordinate projection onto the source block,
    so the two output laws share their mean and only the variance term
    survives.
    """
    _check_base(source, target, "feature")
    if source.dim_y != 1:
        raise DimensionMismatch("feature augmentation is defined for scalar outputs")
    joint = target.joint_task()
    w_t = optimal_linear_model(joint).w[0]
    w_s = optimal_linear_model(source).w[0]
    num = float(w_t @ joint.sigma_x @ w_t)
    den = float(w_s @ source.sigma_x @ w_s)
    if den <= spd_tolerance(source.sigma_x):
        raise ZeroPretrainedSignal("pretrained predictions have zero variance")
    if kind == "kl":
        return RiskDecomposition.of(h(num / den), 0.0)
    if kind == "w2":
        return RiskDecomposition.of((math.sqrt(num) - math.sqrt(den)) ** 2, 0.0)
    raise ValueError(f"unknown divergence kind {kind!r}")


def projected_source_model(source: GaussianTask, target: AugmentedTargetTask) -> LinearModel:
    """The pretrained model composed with the projection onto source features."""
    fs = optimal_linear_model(source)
    pad = np.zeros((fs.w.shape[0], target.added_dim))
    return LinearModel(np.hstack([fs.w, pad]), fs.b)


def output_augmented_laws(source: GaussianTask, target: AugmentedTargetTask, init: LinearModel):
    """``(P_T, P_ST)`` for the output-augmented case as ``GaussianDist`` pairs."""
    _check_base(source, target, "output")
    k, d = target.added_dim, source.dim_x
    if init.w.shape != (k, d):
        raise DimensionMismatch(f"init must map {d} -> {k}, got weight shape {init.w.shape}")
    joint = target.joint_task()
    inputs = source.input_law()
    ft = optimal_linear_model(joint)
    fs = optimal_linear_model(source)
    stacked = LinearModel(np.vstack([fs.w, init.w]), np.concatenate([fs.b, init.b]))
    mu1 = ft.w @ inputs.mean + ft.b
    cov1 = ft.w @ inputs.cov @ ft.w.T
    mu2 = stacked.w @ inputs.mean + stacked.b
    cov2 = stacked.w @ inputs.cov @ stacked.w.T
    return GaussianDist(mu1, cov1), GaussianDist(mu2, cov2)


def output_augmented_risk(
    source: GaussianTask,
    target: AugmentedTargetTask,
    init: LinearModel,
    kind: Kind = "kl",
) -> RiskDecomposition:
    """Risk when the target adds outputs predicted initially by ``init``."""
    p_t, p_st = output_augmented_laws(source, target, init)
    diff = p_t.mean - p_st.mean
    if kind == "kl":
        n = p_t.dim
        trace_term = float(np.trace(spd_solve(p_st.cov, p_t.cov)))
        var = 0.5 * (trace_term - spd_logdet(p_t.cov) + spd_logdet(p_st.cov) - n)
        bias = 0.5 * float(diff @ spd_solve(p_st.cov, diff))
        return RiskDecomposition.of(max(var, 0.0), bias)
    if kind == "w2":
        return RiskDecomposition.of(bures_trace(p_t.cov, p_st.cov), float(diff @ diff))
    raise ValueError(f"unknown divergence kind {kind!r}")


def risk_report(source: GaussianTask, target: GaussianTask) -> dict:
    """All basic-case quantities for a source/target pair, as plain floats."""
    report: dict = {}
    try:
        kl = output_risk_kl(source, target)
        report["risk_kl"] = {"variance": kl.variance_term, "bias": kl.bias_term, "total": kl.total}
    except (ZeroPretrainedSignal, DegenerateOutputCovariance) as exc:
        report["risk_kl"] = {"error": str(exc)}
    w = output_risk_w(source, target)
    report["risk_w"] = {"variance": w.variance_term, "bias": w.bias_term, "total": w.total}
    r = regret(source, target)
    report["regret"] = {
        "regret": r.regret,
        "risk_w": r.risk_w,
        "residual": r.residual,
        "regret_variance": r.regret_variance,
        "regret_bias": r.regret_bias,
    }
    return report


__all__ = [
    "AugmentedTargetTask",
    "GaussianTask",
    "LinearModel",
    "RegretReport",
    "RiskDecomposition",
    "expected_loss",
    "feature_augmented_risk",
    "h",
    "optimal_linear_model",
    "output_augmented_laws",
    "output_augmented_risk",
    "output_risk_kl",
    "output_risk_w",
    "projected_source_model",
    "pushforward_law",
    "regret",
    "risk_report",
    "transfer_laws",
]
