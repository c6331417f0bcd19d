# -*- coding: utf-8 -*-
"""
加权矩服务

职责:
- 三类权重 (常数 / 仿射 / Dirichlet) 及其诱导面密度 ω_j
- 重心单项式的精确矩 (Gamma 恒等式, 用 gammaln 计算)
- 体 / 面加权内积 ⟨·,·⟩_Ω, ⟨·,·⟩_{ω_j}
- 塌缩 (Duffy) 张量 Gauss–Jacobi 求积
- 数据泛函 I_j, L_j, V_k 的计算

不负责:
- 基函数构造 (见 bases)
- 一般权重的条件迹极限 (只支持三类闭式族)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import gammaln, roots_jacobi

from app.core.config import QuadratureConfig, quadrature_config
from app.core.exceptions import ConfigError, MomentsError
from app.services.barypoly import BaryPoly, restrict_to_face
from app.services.geometry import Simplex

logger = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray], np.ndarray]


# ============================================================
# 权重
# ============================================================

class WeightKind(Enum):
    CONSTANT = "constant"
    AFFINE = "affine"
    DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class WeightSpec:
    """
    概率密度 Ω (∫_S Ω = 1)。

    - CONSTANT: Ω = 1/|S|, 等价于 α = (1,…,1) 的 Dirichlet
    - AFFINE: Ω ∝ ∑ α_i λ_i
    - DIRICHLET: Ω ∝ ∏ λ_i^{α_i - 1}
    """
    kind: WeightKind
    alpha: Tuple[float, ...]

    def __post_init__(self) -> None:
        alpha = tuple(float(a) for a in self.alpha)
        if len(alpha) < 1:
            raise ConfigError("alpha 不能为空")
        if any(not math.isfinite(a) or a <= 0.0 for a in alpha):
            raise ConfigError(f"alpha 必须全部为正: {alpha}")
        if self.kind is WeightKind.CONSTANT:
            alpha = (1.0,) * len(alpha)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def constant(cls, d: int) -> "WeightSpec":
        return cls(WeightKind.CONSTANT, (1.0,) * (d + 1))

    @classmethod
    def affine(cls, alpha: Sequence[float]) -> "WeightSpec":
        return cls(WeightKind.AFFINE, tuple(alpha))

    @classmethod
    def dirichlet(cls, alpha: Sequence[float]) -> "WeightSpec":
        return cls(WeightKind.DIRICHLET, tuple(alpha))

    @classmethod
    def parse(cls, text: str, d: int = 3) -> "WeightSpec":
        """'constant' | 'affine:1,2,3,4' | 'dirichlet:2,2,2,2'"""
        kind_text, _, params = text.strip().partition(":")
        try:
            kind = WeightKind(kind_text.strip().lower())
        except ValueError:
            raise ConfigError(f"未知权重类型: {kind_text!r}")
        if kind is WeightKind.CONSTANT:
            return cls.constant(d)
        try:
            alpha = tuple(float(a) for a in params.split(",") if a.strip())
        except ValueError:
            raise ConfigError(f"alpha 解析失败: {params!r}")
        if len(alpha) == 1:
            alpha = alpha * (d + 1)
        if len(alpha) != d + 1:
            raise ConfigError(f"alpha 需要 {d + 1} 个分量, 实际 {len(alpha)}")
        return cls(kind, alpha)

    @property
    def dim(self) -> int:
        return len(self.alpha) - 1

    @property
    def total(self) -> float:
        return float(sum(self.alpha))

    @property
    def is_dirichlet_family(self) -> bool:
        return self.kind in (WeightKind.CONSTANT, WeightKind.DIRICHLET)

    def face(self, j: int) -> "FaceDensity":
        return face_density(self, j)

    def label(self) -> str:
        if self.kind is WeightKind.CONSTANT:
            return "constant"
        return f"{self.kind.value}:" + ",".join(f"{a:g}" for a in self.alpha)


@dataclass(frozen=True)
class FaceDensity:
    """F_j 上的归一化诱导密度 ω_j, weight 为面 (d-1 维) 上的同族权重。"""
    parent: WeightSpec
    j: int
    weight: WeightSpec

    @property
    def params(self) -> Tuple[float, ...]:
        return self.weight.alpha


def face_density(w: WeightSpec, j: int) -> FaceDensity:
    """
    诱导面密度:
    - 常数 -> 面上常数
    - Dirichlet(α) -> Dirichlet({α_i}_{i≠j})  (对面限制封闭)
    - 仿射 ∑α_iλ_i -> ∑_{i≠j} α_i μ_{j,i}, 再归一化
    """
    if not 0 <= j <= w.dim:
        raise MomentsError(f"面索引越界: j={j}, d={w.dim}")
    if w.dim < 1:
        raise MomentsError("0 维权重没有面")
    rest = tuple(a for i, a in enumerate(w.alpha) if i != j)
    return FaceDensity(parent=w, j=j, weight=WeightSpec(w.kind, rest))


# ============================================================
# 精确矩
# ============================================================

def _log_uniform_mean(exps: np.ndarray) -> float:
    """log[(1/|S|)∫ ∏λ^a] = log[d! ∏Γ(a_i+1) / Γ(d+1+∑a)]"""
    d = exps.size - 1
    return float(gammaln(d + 1) + np.sum(gammaln(exps + 1.0)) - gammaln(d + 1 + np.sum(exps)))


def monomial_moment(s: Simplex, exponents: Sequence[float]) -> float:
    """∫_S ∏ λ_i^{a_i} dx = |S| d! ∏Γ(a_i+1) / Γ(d+1+∑a_i)"""
    a = np.asarray(exponents, dtype=float)
    if a.size != s.dim + 1:
        raise MomentsError(f"指数个数 {a.size} 与维数 d={s.dim} 不符")
    if np.any(a <= -1.0):
        raise MomentsError(f"不可积指数 (需要 > -1): {tuple(a)}")
    return s.volume * math.exp(_log_uniform_mean(a))


@lru_cache(maxsize=65536)
def _weighted_mean(w: WeightSpec, exps: Tuple[int, ...]) -> float:
    """E_Ω[∏λ^a], 与单纯形几何无关。"""
    a = np.asarray(exps, dtype=float)
    alpha = np.asarray(w.alpha)
    if w.is_dirichlet_family:
        s_tot = alpha.sum()
        log_val = (
            np.sum(gammaln(a + alpha)) - np.sum(gammaln(alpha))
            + gammaln(s_tot) - gammaln(s_tot + a.sum())
        )
        return float(np.exp(log_val))
    if w.kind is WeightKind.AFFINE:
        norm = alpha.sum() / (w.dim + 1)
        acc = 0.0
        for i, ai in enumerate(alpha):
            shifted = a.copy()
            shifted[i] += 1.0
            acc += ai * math.exp(_log_uniform_mean(shifted))
        return acc / norm
    raise MomentsError(f"不支持的权重类型: {w.kind}")


def expectation(w: WeightSpec, p: BaryPoly) -> float:
    """∫ p Ω"""
    if p.nvars != w.dim + 1:
        raise MomentsError(f"多项式变量数 {p.nvars} 与权重维数 d={w.dim} 不符")
    return float(sum(c * _weighted_mean(w, e) for e, c in p.terms.items()))


def weighted_inner(w: WeightSpec, p: BaryPoly, q: BaryPoly) -> float:
    return expectation(w, p * q)


def gram(w: WeightSpec, ps: Sequence[BaryPoly], qs: Optional[Sequence[BaryPoly]] = None) -> np.ndarray:
    """[⟨q_l, p_k⟩]_{k,l}; qs 缺省时为对称 Gram。"""
    if qs is None:
        n = len(ps)
        out = np.zeros((n, n))
        for k in range(n):
            for l in range(k, n):
                out[k, l] = out[l, k] = weighted_inner(w, ps[k], ps[l])
        return out
    return np.array([[weighted_inner(w, pk, ql) for ql in qs] for pk in ps]).reshape(len(ps), len(qs))


def _check_dim(s: Simplex, w: WeightSpec) -> None:
    if s.dim != w.dim:
        raise MomentsError(f"单纯形维数 d={s.dim} 与权重维数 {w.dim} 不符")


def inner_product_volume(s: Simplex, w: WeightSpec, p: BaryPoly, q: BaryPoly) -> float:
    """⟨p, q⟩_Ω = ∫_S p q Ω, ⟨1,1⟩_Ω = 1。"""
    _check_dim(s, w)
    return weighted_inner(w, p, q)


def inner_product_face(s: Simplex, w: WeightSpec, j: int, p: BaryPoly, q: BaryPoly) -> float:
    """⟨p, q⟩_{ω_j}; p, q 为面坐标 μ_{j,·} 上的多项式。"""
    _check_dim(s, w)
    return weighted_inner(face_density(w, j).weight, p, q)


def density_relative(w: WeightSpec, lam: np.ndarray) -> np.ndarray:
    """Ω·|S| 在重心坐标处的取值 (相对均匀分布的密度, 均值为 1)。"""
    lam = np.asarray(lam, dtype=float)
    alpha = np.asarray(w.alpha)
    if w.kind is WeightKind.CONSTANT:
        return np.ones(lam.shape[:-1])
    if w.kind is WeightKind.DIRICHLET:
        log_c = gammaln(alpha.sum()) - np.sum(gammaln(alpha)) - gammaln(w.dim + 1)
        with np.errstate(divide="ignore"):
            return np.exp(log_c) * np.prod(lam ** (alpha - 1.0), axis=-1)
    if w.kind is WeightKind.AFFINE:
        return (lam @ alpha) / (alpha.sum() / (w.dim + 1))
    raise MomentsError(f"不支持的权重类型: {w.kind}")


# ============================================================
# 求积
# ============================================================

@dataclass(frozen=True, eq=False)
class QuadRule:
    """points (n, ambient), bary (n, d+1), weights (n,) 且 ∑weights = |S|"""
    points: np.ndarray
    bary: np.ndarray
    weights: np.ndarray

    def __iter__(self):
        return iter(zip(self.points, self.weights))

    def __len__(self) -> int:
        return self.weights.size


@lru_cache(maxsize=64)
def reference_rule(d: int, npts: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    参考单纯形上的塌缩张量规则: (重心坐标 (n, d+1), 归一化权重 (n,), ∑=1)。

    第 k 个塌缩轴的 Jacobian 幂次 (1-t)^{d-1-k} 由 Gauss–Jacobi 权吸收,
    总次数 <= 2·npts-1 的多项式精确积分。
    """
    if npts < 1:
        raise MomentsError(f"npts 必须 >= 1: {npts}")
    if d == 0:
        return np.ones((1, 1)), np.ones(1)
    axes_t, axes_w = [], []
    for k in range(d):
        power = d - 1 - k
        x, wx = roots_jacobi(npts, power, 0.0)
        axes_t.append(0.5 * (x + 1.0))
        axes_w.append(wx / 2.0 ** (power + 1))
    grids = np.meshgrid(*axes_t, indexing="ij")
    wgrid = np.meshgrid(*axes_w, indexing="ij")
    t = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrid], axis=1), axis=1)

    x = np.empty_like(t)
    remaining = np.ones(t.shape[0])
    for k in range(d):
        x[:, k] = remaining * t[:, k]
        remaining = remaining * (1.0 - t[:, k])
    bary = np.hstack([1.0 - x.sum(axis=1, keepdims=True), x])
    wts = wts * math.factorial(d)
    bary.setflags(write=False)
    wts.setflags(write=False)
    return bary, wts


def quad_rule_simplex(s: Simplex, npts_per_axis: int) -> QuadRule:
    bary, wts = reference_rule(s.dim, npts_per_axis)
    return QuadRule(points=s.point(bary), bary=bary, weights=wts * s.volume)


# ============================================================
# 数据泛函
# ============================================================

@dataclass
class DataVector:
    """(I_0..I_d, L_0..L_d, V_1..V_d̃)"""
    I: np.ndarray
    L: np.ndarray
    V: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.I, self.L, self.V])

    @classmethod
    def from_array(cls, arr: np.ndarray, d: int) -> "DataVector":
        arr = np.asarray(arr, dtype=float)
        return cls(I=arr[: d + 1], L=arr[d + 1: 2 * (d + 1)], V=arr[2 * (d + 1):])

    def to_dict(self) -> dict:
        return {"I": self.I.tolist(), "L": self.L.tolist(), "V": self.V.tolist()}


class FunctionalQuadrature:
    """
    I_j, L_j, V_k 的求积模板。

    所有量都在重心坐标下定义, 因此每个单元共享同一组参考点与权重,
    单元之间只有物理坐标不同。
    """

    def __init__(
        self,
        weight: WeightSpec,
        q: Sequence[BaryPoly],
        rho: Sequence[BaryPoly],
        npts: Optional[int] = None,
        config: Optional[QuadratureConfig] = None,
    ) -> None:
        cfg = config or quadrature_config
        self.weight = weight
        self.d = weight.dim
        self.npts = npts or cfg.data_npts
        if weight.kind is WeightKind.DIRICHLET and min(weight.alpha) < 1.0:
            raise MomentsError(
                f"Dirichlet α_i < 1 时密度在边界奇异, 拒绝对非多项式函数做普通求积: α={weight.alpha}"
            )
        d = self.d
        self.face_bary, face_w = reference_rule(d - 1, self.npts)
        self.vol_bary, vol_w = reference_rule(d, self.npts)
        self.face_index = [np.array([i for i in range(d + 1) if i != j]) for j in range(d + 1)]

        self.face_avg_w = np.zeros((d + 1, face_w.size))
        self.face_q_w = np.zeros((d + 1, face_w.size))
        for j in range(d + 1):
            dens = density_relative(face_density(weight, j).weight, self.face_bary)
            self.face_avg_w[j] = face_w * dens
            self.face_q_w[j] = self.face_avg_w[j] * q[j](self.face_bary)
        vol_dens = vol_w * density_relative(weight, self.vol_bary)
        self.vol_rho_w = np.array([vol_dens * r(self.vol_bary) for r in rho]).reshape(len(rho), vol_w.size)

    def evaluate(self, vertices: np.ndarray, f: ScalarField) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """vertices (K, d+1, d) -> I (K, d+1), L (K, d+1), V (K, d̃)"""
        vertices = np.asarray(vertices, dtype=float)
        k = vertices.shape[0]
        d = self.d
        i_data = np.zeros((k, d + 1))
        l_data = np.zeros((k, d + 1))
        for j in range(d + 1):
            fv = vertices[:, self.face_index[j], :]
            pts = np.einsum("qm,kmx->kqx", self.face_bary, fv)
            vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(k, -1)
            i_data[:, j] = vals @ self.face_avg_w[j]
            l_data[:, j] = vals @ self.face_q_w[j]
        pts = np.einsum("qm,kmx->kqx", self.vol_bary, vertices)
        vals = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(k, -1)
        v_data = vals @ self.vol_rho_w.T
        return i_data, l_data, v_data


def functional_data(
    s: Simplex,
    w: WeightSpec,
    f: Union[ScalarField, BaryPoly],
    bundle,
    npts: Optional[int] = None,
) -> DataVector:
    """
    I_j(f) = ⟨f, 1⟩_{ω_j}, L_j(f) = ⟨f, q_j⟩_{ω_j}, V_k(f) = ⟨f, ρ_k⟩_Ω

    f 为 BaryPoly 时走闭式矩, 否则走求积 (bundle 提供 q, rho)。
    """
    _check_dim(s, w)
    if isinstance(f, BaryPoly):
        faces = [face_density(w, j).weight for j in range(w.dim + 1)]
        restricted = [restrict_to_face(f, j) for j in range(w.dim + 1)]
        return DataVector(
            I=np.array([expectation(fw, r) for fw, r in zip(faces, restricted)]),
            L=np.array([weighted_inner(fw, r, qj) for fw, r, qj in zip(faces, restricted, bundle.q)]),
            V=np.array([weighted_inner(w, f, rk) for rk in bundle.rho]),
        )
    stencil = FunctionalQuadrature(w, bundle.q, bundle.rho, npts=npts)
    i_data, l_data, v_data = stencil.evaluate(s.vertices[None], f)
    return DataVector(I=i_data[0], L=l_data[0], V=v_data[0])
