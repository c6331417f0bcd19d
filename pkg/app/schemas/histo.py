# -*- coding: utf-8 -*-
"""
实验结果数据模型

CSV 列与 JSON 键的顺序在这里固定, CLI 与 evaluation 只负责落盘。
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence


CONVERGENCE_HEADER = ("n", "h", "scheme", "weight", "error", "order")
BETA_CURVE_HEADER = ("alpha", "beta", "beta_reg")
GRID_HEADER = ("function", "mesh", "n", "h", "scheme", "weight", "error", "order")


def empirical_order(e0: float, e1: float, h0: float, h1: float) -> Optional[float]:
    """log(e_i/e_{i+1}) / log(h_i/h_{i+1})"""
    if e0 <= 0.0 or e1 <= 0.0 or h0 == h1:
        return None
    return math.log(e0 / e1) / math.log(h0 / h1)


# ============================================================
# 收敛实验
# ============================================================

@dataclass
class ErrorReport:
    """单个网格层的误差 (某个格式未计算时为 None)"""
    n: int
    h: float
    err_linear: Optional[float] = None
    err_quadratic: Optional[float] = None
    order_linear: Optional[float] = None
    order_quadratic: Optional[float] = None

    def error(self, scheme: str) -> Optional[float]:
        return self.err_linear if scheme == "linear" else self.err_quadratic

    def order(self, scheme: str) -> Optional[float]:
        return self.order_linear if scheme == "linear" else self.order_quadratic


@dataclass
class ConvergenceTable:
    function: str
    weight: str
    mesh_kind: str
    schemes: List[str]
    levels: List[ErrorReport] = field(default_factory=list)

    def fill_orders(self) -> None:
        for prev, cur in zip(self.levels, self.levels[1:]):
            if prev.err_linear is not None and cur.err_linear is not None:
                cur.order_linear = empirical_order(prev.err_linear, cur.err_linear, prev.h, cur.h)
            if prev.err_quadratic is not None and cur.err_quadratic is not None:
                cur.order_quadratic = empirical_order(prev.err_quadratic, cur.err_quadratic, prev.h, cur.h)

    def rows(self) -> List[List[Any]]:
        """按 (n, scheme) 排序的 CSV 行"""
        out = []
        for level in sorted(self.levels, key=lambda lv: lv.n):
            for scheme in sorted(self.schemes):
                out.append([level.n, level.h, scheme, self.weight, level.error(scheme), level.order(scheme)])
        return out

    def to_dict(self) -> Dict[str, Any]:
        return {
            "function": self.function,
            "weight": self.weight,
            "mesh": self.mesh_kind,
            "rows": [dict(zip(CONVERGENCE_HEADER, r)) for r in self.rows()],
        }


# ============================================================
# β 曲线
# ============================================================

@dataclass
class BetaCurveRow:
    alpha: float
    beta: float
    beta_reg: Optional[float] = None

    def as_row(self) -> List[Any]:
        return [self.alpha, self.beta, self.beta_reg]


def is_strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))
