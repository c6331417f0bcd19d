# -*- coding: utf-8 -*-
"""
重心坐标多项式 BaryPoly

多项式以 λ_0..λ_d 的单项式指数 -> 系数 的映射存储。
不按 ∑λ_i = 1 约化: 表示不唯一, 但所有使用方都是求值或积分。
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

from app.core.exceptions import BaryPolyError, GeometryError

Exponent = Tuple[int, ...]

PRUNE_REL_TOL = 1e-15


def _prune(terms: Mapping[Exponent, float]) -> Dict[Exponent, float]:
    if not terms:
        return {}
    cmax = max(abs(c) for c in terms.values())
    if cmax == 0.0:
        return {}
    cut = PRUNE_REL_TOL * cmax
    return {e: float(c) for e, c in terms.items() if abs(c) > cut}


@dataclass(frozen=True, eq=False)
class BaryPoly:
    """∑ c_α ∏ λ_i^{α_i}"""
    nvars: int
    terms: Dict[Exponent, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.nvars < 1:
            raise BaryPolyError(f"nvars 必须 >= 1: {self.nvars}")
        for e in self.terms:
            if len(e) != self.nvars or any(k < 0 for k in e):
                raise BaryPolyError(f"非法指数 {e} (nvars={self.nvars})")
        object.__setattr__(self, "terms", _prune(self.terms))

    # ------------------------------------------------------------
    # 构造
    # ------------------------------------------------------------

    @classmethod
    def zero(cls, nvars: int) -> "BaryPoly":
        return cls(nvars, {})

    @classmethod
    def constant(cls, nvars: int, c: float = 1.0) -> "BaryPoly":
        return cls(nvars, {(0,) * nvars: float(c)})

    @classmethod
    def coordinate(cls, nvars: int, i: int) -> "BaryPoly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1.0})

    @classmethod
    def monomial(cls, exponents: Sequence[int], c: float = 1.0) -> "BaryPoly":
        return cls(len(exponents), {tuple(int(k) for k in exponents): float(c)})

    @classmethod
    def linear(cls, coeffs: Sequence[float]) -> "BaryPoly":
        n = len(coeffs)
        return cls(n, {tuple(1 if k == i else 0 for k in range(n)): float(c) for i, c in enumerate(coeffs)})

    @classmethod
    def combination(cls, coeffs: Iterable[float], polys: Sequence["BaryPoly"]) -> "BaryPoly":
        out = cls.zero(polys[0].nvars)
        for c, p in zip(coeffs, polys):
            out = out + p.scale(c)
        return out

    # ------------------------------------------------------------
    # 代数
    # ------------------------------------------------------------

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def _check(self, other: "BaryPoly") -> None:
        if self.nvars != other.nvars:
            raise BaryPolyError(f"变量数不匹配: {self.nvars} vs {other.nvars}")

    def __add__(self, other: "BaryPoly") -> "BaryPoly":
        self._check(other)
        out = dict(self.terms)
        for e, c in other.terms.items():
            out[e] = out.get(e, 0.0) + c
        return BaryPoly(self.nvars, out)

    def __neg__(self) -> "BaryPoly":
        return self.scale(-1.0)

    def __sub__(self, other: "BaryPoly") -> "BaryPoly":
        return self + (-other)

    def __mul__(self, other) -> "BaryPoly":
        if isinstance(other, BaryPoly):
            return poly_mul(self, other)
        return self.scale(float(other))

    __rmul__ = __mul__

    def scale(self, c: float) -> "BaryPoly":
        return BaryPoly(self.nvars, {e: c * v for e, v in self.terms.items()})

    def __call__(self, lam: np.ndarray) -> np.ndarray:
        return poly_eval(self, lam)

    def exponent_array(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.terms:
            return np.zeros((0, self.nvars), dtype=int), np.zeros(0)
        exps = np.array(list(self.terms.keys()), dtype=int)
        coefs = np.array(list(self.terms.values()), dtype=float)
        return exps, coefs

    def __repr__(self) -> str:
        parts = []
        for e, c in sorted(self.terms.items()):
            mono = "*".join(f"l{i}^{k}" if k > 1 else f"l{i}" for i, k in enumerate(e) if k)
            parts.append(f"{c:+.6g}" + (f"*{mono}" if mono else ""))
        return f"BaryPoly({' '.join(parts) or '0'})"


# ============================================================
# 运算
# ============================================================

def poly_eval(p: BaryPoly, lam: np.ndarray) -> np.ndarray:
    """λ 形状 (nvars,) 返回标量; (n, nvars) 返回 (n,)。"""
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != p.nvars:
        raise BaryPolyError(f"重心坐标长度 {lam.shape[-1]} 与 nvars={p.nvars} 不符")
    exps, coefs = p.exponent_array()
    if coefs.size == 0:
        return np.zeros(lam.shape[:-1]) if lam.ndim > 1 else np.float64(0.0)
    vals = np.prod(lam[..., None, :] ** exps, axis=-1) @ coefs
    return vals


def poly_mul(p: BaryPoly, q: BaryPoly) -> BaryPoly:
    p._check(q)
    out: Dict[Exponent, float] = {}
    for ep, cp in p.terms.items():
        for eq_, cq in q.terms.items():
            e = tuple(a + b for a, b in zip(ep, eq_))
            out[e] = out.get(e, 0.0) + cp * cq
    return BaryPoly(p.nvars, out)


def restrict_to_face(p: BaryPoly, j: int) -> BaryPoly:
    """λ_j = 0 代入, 剩余变量按 i 递增顺序重编号为面坐标 μ_{j,i}。"""
    if not 0 <= j < p.nvars:
        raise GeometryError(f"面索引越界: j={j}, nvars={p.nvars}")
    if p.nvars < 2:
        raise BaryPolyError("0 维单纯形没有面")
    out: Dict[Exponent, float] = {}
    for e, c in p.terms.items():
        if e[j] > 0:
            continue
        key = e[:j] + e[j + 1:]
        out[key] = out.get(key, 0.0) + c
    return BaryPoly(p.nvars - 1, out)


def embed_face_bary(mu: np.ndarray, j: int) -> np.ndarray:
    """面重心坐标 μ_{j,·} -> 父单纯形重心坐标 (λ_j = 0)。"""
    mu = np.asarray(mu, dtype=float)
    return np.insert(mu, j, 0.0, axis=-1)
