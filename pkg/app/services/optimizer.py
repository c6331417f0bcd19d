# -*- coding: utf-8 -*-
"""
参数优化服务

p = (α, θ, υ):
- α: Dirichlet 密度参数 (d+1 个)
- θ: 面矩缩放 (d+1 个)
- υ: 内部矩缩放 (d̃ 个)

在 log 空间用 scipy.optimize.minimize (默认 Nelder–Mead) 搜索:
- MAX_BETA: 最小化 -β(p), θ 与 υ 各自归一化到几何平均 1
- MIN_KAPPA: 最小化 κ₂(H̃(p))

任何数值失败 (不可解, M 奇异, Gram 奇异) 的评估点记为 +∞。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from app.core.config import OptimizerConfig, optimizer_config
from app.core.exceptions import ConfigError, HistopolationError
from app.services.bases import BasisMode, build_bundle, interior_dim
from app.services.geometry import Simplex, reference_simplex
from app.services.moment_system import assemble, stability
from app.services.moments import WeightSpec

logger = logging.getLogger(__name__)


class ObjectiveMode(Enum):
    MAX_BETA = "max_beta"
    MIN_KAPPA = "min_kappa"

    @classmethod
    def parse(cls, text: str) -> "ObjectiveMode":
        key = text.strip().lower().replace("-", "_")
        aliases = {"maxbeta": "max_beta", "minkappa": "min_kappa"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"未知优化目标: {text!r} (可选 max_beta/min_kappa)")


@dataclass(frozen=True, eq=False)
class ParamVector:
    alpha: np.ndarray
    theta: np.ndarray
    upsilon: np.ndarray

    def __post_init__(self) -> None:
        for name in ("alpha", "theta", "upsilon"):
            v = np.array(getattr(self, name), dtype=float).ravel()
            if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
                raise ConfigError(f"{name} 必须全部为正: {v.tolist()}")
            v.setflags(write=False)
            object.__setattr__(self, name, v)
        d = self.alpha.size - 1
        if self.theta.size != d + 1 or self.upsilon.size != interior_dim(d):
            raise ConfigError(
                f"参数长度不一致: α {self.alpha.size}, θ {self.theta.size}, υ {self.upsilon.size}"
            )

    @classmethod
    def initial(cls, alpha: Sequence[float]) -> "ParamVector":
        """θ = υ = 1"""
        d = len(alpha) - 1
        return cls(alpha=np.asarray(alpha, dtype=float), theta=np.ones(d + 1), upsilon=np.ones(interior_dim(d)))

    @classmethod
    def from_log(cls, x: np.ndarray, d: int) -> "ParamVector":
        x = np.asarray(x, dtype=float)
        n = d + 1
        return cls(alpha=np.exp(x[:n]), theta=np.exp(x[n:2 * n]), upsilon=np.exp(x[2 * n:]))

    @property
    def d(self) -> int:
        return self.alpha.size - 1

    def to_log(self) -> np.ndarray:
        return np.log(np.concatenate([self.alpha, self.theta, self.upsilon]))

    def to_dict(self) -> Dict[str, List[float]]:
        return {"alpha": self.alpha.tolist(), "theta": self.theta.tolist(), "upsilon": self.upsilon.tolist()}


def _geometric_normalize(v: np.ndarray) -> np.ndarray:
    if v.size == 0:
        return v
    return v / math.exp(float(np.mean(np.log(v))))


def evaluate_point(
    p: ParamVector,
    basis_mode: Optional[str] = None,
    simplex: Optional[Simplex] = None,
    normalize_scales: bool = False,
) -> Dict[str, Any]:
    """重建密度, 基函数, 块矩阵与 Ŝ, 返回 β, κ₂ 与可解性 (失败直接抛异常)。"""
    mode = BasisMode.parse(basis_mode or optimizer_config.basis_mode)
    s = simplex or reference_simplex(p.d)
    w = WeightSpec.dirichlet(p.alpha)
    bundle = build_bundle(s, w, mode)
    sys = assemble(s, w, bundle)
    theta, upsilon = p.theta, p.upsilon
    if normalize_scales:
        theta, upsilon = _geometric_normalize(theta), _geometric_normalize(upsilon)
    report = stability(sys, theta, upsilon)
    return {"beta": report.beta, "kappa": report.kappaH, "unisolvent": report.unisolvent}


def objective(
    p: ParamVector,
    mode: ObjectiveMode,
    basis_mode: Optional[str] = None,
    simplex: Optional[Simplex] = None,
) -> float:
    """最小化约定: MAX_BETA 返回 -β, MIN_KAPPA 返回 κ₂; 失败返回 +∞。"""
    try:
        info = evaluate_point(p, basis_mode, simplex, normalize_scales=mode is ObjectiveMode.MAX_BETA)
    except (HistopolationError, np.linalg.LinAlgError, FloatingPointError) as e:
        logger.debug("objective evaluation failed at %s: %s", p.to_dict(), e)
        return float("inf")
    if not info["unisolvent"]:
        return float("inf")
    value = -info["beta"] if mode is ObjectiveMode.MAX_BETA else info["kappa"]
    return float(value) if math.isfinite(value) else float("inf")


# ============================================================
# 优化
# ============================================================

@dataclass
class OptimizeResult:
    p0: ParamVector
    p_star: ParamVector
    f0: float
    f_star: float
    mode: ObjectiveMode
    trace: List[float] = field(default_factory=list)
    n_evals: int = 0
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        def _num(x: float) -> Optional[float]:
            return float(x) if math.isfinite(x) else None

        return {
            "mode": self.mode.value,
            "p0": self.p0.to_dict(),
            "p_star": self.p_star.to_dict(),
            "objective_start": _num(self.f0),
            "objective_final": _num(self.f_star),
            "n_evals": self.n_evals,
            "trace": [_num(v) for v in self.trace],
            "message": self.message,
        }


class _BudgetExhausted(Exception):
    pass


def _method_options(method: str, budget: int, xatol: float) -> Dict[str, Any]:
    name = method.lower()
    if name == "nelder-mead":
        return {"maxfev": budget, "xatol": xatol, "fatol": np.inf}
    if name == "powell":
        return {"maxfev": budget, "xtol": xatol}
    return {"maxiter": budget}


def _initial_simplex(x0: np.ndarray, lower: np.ndarray, upper: np.ndarray, step: float) -> np.ndarray:
    sim = np.tile(x0, (x0.size + 1, 1))
    for i in range(x0.size):
        sim[i + 1, i] += step if x0[i] + step <= upper[i] else -step
    return np.clip(sim, lower, upper)


def optimize(
    p0: ParamVector,
    mode: ObjectiveMode = ObjectiveMode.MAX_BETA,
    budget: Optional[int] = None,
    config: Optional[OptimizerConfig] = None,
    simplex: Optional[Simplex] = None,
) -> OptimizeResult:
    """
    log 参数空间的无导数搜索。

    - p0 总是第一个评估点, 返回的 p* 不会比 p0 差
    - trace 为每次评估后的历史最优值 (单调不增)
    - budget = 0 时直接返回 p0, trace 为空
    """
    cfg = config or optimizer_config
    if isinstance(mode, str):
        mode = ObjectiveMode.parse(mode)
    budget = cfg.budget if budget is None else int(budget)
    if budget < 0:
        raise ConfigError(f"budget 必须 >= 0: {budget}")
    d = p0.d
    if mode is ObjectiveMode.MAX_BETA and interior_dim(d) == 0:
        raise ConfigError("d = 2 时没有内部自由度, β 恒为 +∞, 无法做 MAX_BETA 优化")

    if budget == 0:
        f0 = objective(p0, mode, cfg.basis_mode, simplex)
        return OptimizeResult(p0=p0, p_star=p0, f0=f0, f_star=f0, mode=mode, message="budget is zero")

    n = d + 1
    lower = np.concatenate([
        np.full(n, math.log(cfg.alpha_box[0])),
        np.full(n + interior_dim(d), math.log(cfg.scale_box[0])),
    ])
    upper = np.concatenate([
        np.full(n, math.log(cfg.alpha_box[1])),
        np.full(n + interior_dim(d), math.log(cfg.scale_box[1])),
    ])

    trace: List[float] = []
    best: Dict[str, Any] = {"p": p0, "f": float("inf")}
    count = 0

    def record(p: ParamVector) -> float:
        nonlocal count
        if count >= budget:
            raise _BudgetExhausted()
        count += 1
        value = objective(p, mode, cfg.basis_mode, simplex)
        if value < best["f"]:
            best["p"], best["f"] = p, value
        trace.append(best["f"])
        return value

    def fun(x: np.ndarray) -> float:
        return record(ParamVector.from_log(x, d))

    f0 = record(p0)
    x0 = np.clip(p0.to_log(), lower, upper)
    options = _method_options(cfg.method, max(budget - 1, 1), cfg.xatol)
    if cfg.method.lower() == "nelder-mead":
        options["initial_simplex"] = _initial_simplex(x0, lower, upper, cfg.initial_step)

    message = ""
    if budget > 1:
        try:
            res = minimize(fun, x0, method=cfg.method, bounds=list(zip(lower, upper)), options=options)
            message = str(res.message)
        except _BudgetExhausted:
            message = f"evaluation budget exhausted ({budget})"
    else:
        message = f"evaluation budget exhausted ({budget})"

    logger.info(
        "optimize finished: mode=%s evals=%d f0=%.6e f*=%.6e (%s)",
        mode.value, count, f0, best["f"], message,
    )
    return OptimizeResult(
        p0=p0, p_star=best["p"], f0=f0, f_star=best["f"], mode=mode,
        trace=trace, n_evals=count, message=message,
    )
