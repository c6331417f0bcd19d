# -*- coding: utf-8 -*-
"""
基函数构造服务

职责:
- P₁ 加权正交投影 Π_{1,Ω}, Π_{1,ω_j}
- 面 bubble: g_j = λ_{j+s} λ_{j+s+1} (mod d+1), ψ_j = (I - Π_{1,Ω}) g_j
- 内部族 ρ_k: Dirichlet 闭式 / 正交分裂 S₂ = V ⊕ W / 谱最优 ρ*
- 面检验多项式 q_j: 默认核空间构造 / 最优 q_j*
- M 归一化 (W 内换基使 M = I)

不负责:
- 矩阵组装与稳定性 (见 moment_system)
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import null_space

from app.core.config import BasisConfig, basis_config
from app.core.exceptions import BasisError, ConfigError
from app.services.barypoly import BaryPoly, restrict_to_face
from app.services.geometry import Simplex
from app.services.moments import WeightSpec, expectation, face_density, gram, weighted_inner

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]


class BasisMode(Enum):
    RAW = "raw"              # 定理构造: ψ, 非循环对 ρ, 默认 q
    CANONICAL = "canonical"  # 正交分裂: G = I, C = 0
    OPTIMAL = "optimal"      # ρ*, q*

    @classmethod
    def parse(cls, text: str) -> "BasisMode":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigError(f"未知基函数模式: {text!r} (可选 raw/canonical/optimal)")


@dataclass(frozen=True, eq=False)
class BasisBundle:
    """ψ (W 的基), ρ (V 的基), q (每个面一个) 及构造标记"""
    weight: WeightSpec
    simplex: Simplex
    psi: Tuple[BaryPoly, ...]
    rho: Tuple[BaryPoly, ...]
    q: Tuple[BaryPoly, ...]
    orthonormal_rho: bool = False
    v_perp_w: bool = False
    m_normalized: bool = False
    bubble_offset: int = 0
    mode: str = "custom"

    @property
    def d(self) -> int:
        return self.weight.dim

    @property
    def dtilde(self) -> int:
        return len(self.rho)

    def replace(self, **changes) -> "BasisBundle":
        return dataclasses.replace(self, **changes)

    def counts(self) -> Dict[str, int]:
        return {"psi": len(self.psi), "q": len(self.q), "rho": len(self.rho)}


# ============================================================
# 组合工具
# ============================================================

def interior_dim(d: int) -> int:
    """d̃ = (d-2)(d+1)/2"""
    return (d - 2) * (d + 1) // 2


def bubble_pair(d: int, j: int, offset: int = 0) -> Pair:
    a, b = (j + offset) % (d + 1), (j + offset + 1) % (d + 1)
    return (a, b)


def bubble(d: int, j: int, offset: int = 0) -> BaryPoly:
    a, b = bubble_pair(d, j, offset)
    e = [0] * (d + 1)
    e[a] += 1
    e[b] += 1
    return BaryPoly.monomial(e)


def noncyclic_pairs(d: int) -> List[Pair]:
    """不是 bubble 的顶点对 (j < l), 共 d̃ 个。"""
    cyclic = {tuple(sorted(bubble_pair(d, j))) for j in range(d + 1)}
    return [(j, l) for j in range(d + 1) for l in range(j + 1, d + 1) if (j, l) not in cyclic]


def vanishing_bubbles(d: int, j: int, offset: int = 0) -> List[int]:
    """在 F_j 上恒为零的 g_l 的下标 l ∈ {j-s, j-s-1}。"""
    return sorted({(j - offset) % (d + 1), (j - offset - 1) % (d + 1)})


def active_bubbles(d: int, j: int, offset: int = 0) -> List[int]:
    """B_j: 限制到 F_j 后不为零的 bubble。"""
    dead = set(vanishing_bubbles(d, j, offset))
    return [l for l in range(d + 1) if l not in dead]


def coupled_bubble(d: int, j: int, offset: int = 0) -> int:
    """l*(j): 优先 j+2 (mod d+1), 否则从 j 起循环取 B_j 的第一个。"""
    active = active_bubbles(d, j, offset)
    preferred = (j + 2) % (d + 1)
    if preferred in active:
        return preferred
    for k in range(d + 1):
        cand = (j + k) % (d + 1)
        if cand in active:
            return cand
    raise BasisError(f"面 {j} 上没有非零 bubble")


def _coords(nvars: int) -> List[BaryPoly]:
    return [BaryPoly.coordinate(nvars, i) for i in range(nvars)]


def _check_simplex(s: Simplex, w: WeightSpec) -> None:
    if s.dim != w.dim:
        raise BasisError(f"单纯形维数 d={s.dim} 与权重维数 {w.dim} 不符")


# ============================================================
# P₁ 投影
# ============================================================

def p1_projection(w: WeightSpec, p: BaryPoly) -> BaryPoly:
    """Π_{1}(p) = ∑ c_i λ_i, 解 (d+1)×(d+1) Gram 系统。"""
    lam = _coords(w.dim + 1)
    g = gram(w, lam)
    b = np.array([weighted_inner(w, p, li) for li in lam])
    try:
        c = np.linalg.solve(g, b)
    except np.linalg.LinAlgError as e:
        raise BasisError(f"P₁ Gram 系统求解失败: {e}")
    return BaryPoly.linear(c)


def p1_residual(w: WeightSpec, p: BaryPoly) -> BaryPoly:
    return p - p1_projection(w, p)


def project_p1_volume(s: Simplex, w: WeightSpec, p: BaryPoly) -> BaryPoly:
    _check_simplex(s, w)
    return p1_projection(w, p)


def project_p1_face(s: Simplex, w: WeightSpec, j: int, p: BaryPoly) -> BaryPoly:
    _check_simplex(s, w)
    return p1_projection(face_density(w, j).weight, p)


# ============================================================
# S₂ 工作基
# ============================================================

def dirichlet_pair(alpha: Sequence[float], j: int, l: int) -> BaryPoly:
    """
    ρ_{jl} = λ_jλ_l - k_l λ_j - k_j λ_l + h_{jl}
    k_l = α_l/(S+2), h_{jl} = α_jα_l/((S+1)(S+2))
    """
    alpha = np.asarray(alpha, dtype=float)
    n = alpha.size
    s_tot = float(alpha.sum())
    k = alpha / (s_tot + 2.0)
    h = alpha[j] * alpha[l] / ((s_tot + 1.0) * (s_tot + 2.0))
    e = [0] * n
    e[j] += 1
    e[l] += 1
    poly = BaryPoly.monomial(e)
    poly = poly - BaryPoly.coordinate(n, j).scale(k[l]) - BaryPoly.coordinate(n, l).scale(k[j])
    return poly + BaryPoly.constant(n, h)


def build_rho_dirichlet(s: Simplex, alpha: Sequence[float]) -> List[BaryPoly]:
    """全部 d(d+1)/2 个闭式 ρ_{jl} (j < l, 字典序), 构成 S₂ 的基。"""
    n = len(alpha)
    if n != s.dim + 1:
        raise BasisError(f"alpha 长度 {n} 与维数 d={s.dim} 不符")
    return [dirichlet_pair(alpha, j, l) for j in range(n) for l in range(j + 1, n)]


def s2_pair_functions(w: WeightSpec, pairs: Sequence[Pair]) -> List[BaryPoly]:
    """(I - Π₁)(λ_jλ_l); Dirichlet 族直接用闭式。"""
    out = []
    n = w.dim + 1
    for j, l in pairs:
        if w.is_dirichlet_family:
            out.append(dirichlet_pair(w.alpha, j, l))
        else:
            e = [0] * n
            e[j] += 1
            e[l] += 1
            out.append(p1_residual(w, BaryPoly.monomial(e)))
    return out


def orthonormalize(w: WeightSpec, polys: Sequence[BaryPoly]) -> List[BaryPoly]:
    """Cholesky 正交化: e = L⁻¹ b, Gram(e) = I。"""
    if not polys:
        return []
    g = gram(w, polys)
    try:
        chol = np.linalg.cholesky(g)
    except np.linalg.LinAlgError:
        raise BasisError("Gram 矩阵非正定, 基函数线性相关")
    coeffs = np.linalg.inv(chol)
    return [BaryPoly.combination(row, polys) for row in coeffs]


def face_s2_basis(w: WeightSpec, j: int) -> List[BaryPoly]:
    """S₂(F_j) 的 ω_j-正交归一基 (面上的 Dirichlet 闭式再正交化)。"""
    fw = face_density(w, j).weight
    n = fw.dim + 1
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n)]
    return orthonormalize(fw, s2_pair_functions(fw, pairs))


# ============================================================
# ψ
# ============================================================

def build_psi(
    s: Simplex,
    w: WeightSpec,
    offset: Optional[int] = None,
    config: Optional[BasisConfig] = None,
) -> List[BaryPoly]:
    """ψ_j = (I - Π_{1,Ω})(g_j), j = 0..d。"""
    cfg = config or basis_config
    _check_simplex(s, w)
    d = w.dim
    if d < 2:
        raise BasisError(f"bubble 构造需要 d >= 2, 实际 d={d}")
    off = cfg.bubble_offset if offset is None else offset
    psi = [p1_residual(w, bubble(d, j, off)) for j in range(d + 1)]

    g = gram(w, psi)
    diag = np.sqrt(np.diag(g))
    if np.any(diag == 0.0):
        raise BasisError("存在零 ψ_j")
    normalized_det = float(np.linalg.det(g / np.outer(diag, diag)))
    if normalized_det <= cfg.independence_tol:
        raise BasisError(f"ψ 线性相关: 归一化 Gram 行列式 {normalized_det:.3e}")
    return psi


# ============================================================
# V ⊕ W 分裂
# ============================================================

def split_V_W(
    s: Simplex,
    w: WeightSpec,
    psi: Sequence[BaryPoly],
    q: Optional[Sequence[BaryPoly]] = None,
    config: Optional[BasisConfig] = None,
) -> Tuple[List[BaryPoly], BasisBundle]:
    """
    V = W 在 S₂ 中的 Ω-正交补。

    对 S₂ 的 Dirichlet 闭式基做修正 Gram–Schmidt (先对 W, 再对已接受的 ρ),
    得到正交归一的 ρ, 于是 G = I, C = 0。
    """
    cfg = config or basis_config
    _check_simplex(s, w)
    d = w.dim
    dtilde = interior_dim(d)
    w_basis = orthonormalize(w, psi)

    all_pairs = [(a, b) for a in range(d + 1) for b in range(a + 1, d + 1)]
    pairs = noncyclic_pairs(d) + [p for p in all_pairs if p not in noncyclic_pairs(d)]
    rho: List[BaryPoly] = []
    for cand in s2_pair_functions(w, pairs):
        if len(rho) == dtilde:
            break
        ref_norm = np.sqrt(weighted_inner(w, cand, cand))
        v = cand
        for _ in range(2):
            for e in list(w_basis) + rho:
                v = v - e.scale(weighted_inner(w, v, e))
        nrm = np.sqrt(max(weighted_inner(w, v, v), 0.0))
        if nrm > 1e-8 * ref_norm:
            rho.append(v.scale(1.0 / nrm))
    if len(rho) < dtilde:
        raise BasisError(f"S₂ 正交补秩不足: 得到 {len(rho)} / {dtilde}")

    off = cfg.bubble_offset
    if q is None:
        q = [build_q_default(s, w, j, offset=off, config=cfg) for j in range(d + 1)]
    bundle = BasisBundle(
        weight=w,
        simplex=s,
        psi=tuple(psi),
        rho=tuple(rho),
        q=tuple(q),
        orthonormal_rho=True,
        v_perp_w=True,
        bubble_offset=off,
        mode=BasisMode.CANONICAL.value,
    )
    return rho, bundle


# ============================================================
# q
# ============================================================

def build_q_default(
    s: Simplex,
    w: WeightSpec,
    j: int,
    offset: Optional[int] = None,
    config: Optional[BasisConfig] = None,
) -> BaryPoly:
    """
    q_j ∈ S₂(F_j): 对 l ∈ B_j \\ {l*} 有 ⟨g_l|F_j, q_j⟩ = 0, 对 l* 非零。

    在 S₂(F_j) 的正交归一基中求约束的核, 再取 g_{l*} 的 Riesz 表示在核上的投影,
    ‖q_j‖_{ω_j} = 1 且 ⟨g_{l*}|F_j, q_j⟩ > 0。
    """
    cfg = config or basis_config
    _check_simplex(s, w)
    d = w.dim
    if d < 2:
        raise BasisError(f"面检验多项式需要 d >= 2, 实际 d={d}")
    off = cfg.bubble_offset if offset is None else offset
    fw = face_density(w, j).weight
    basis = face_s2_basis(w, j)

    def riesz(l: int) -> np.ndarray:
        g_face = restrict_to_face(bubble(d, l, off), j)
        return np.array([weighted_inner(fw, g_face, e) for e in basis])

    target = coupled_bubble(d, j, off)
    constraints = [riesz(l) for l in active_bubbles(d, j, off) if l != target]
    if constraints:
        kernel = null_space(np.vstack(constraints))
    else:
        kernel = np.eye(len(basis))
    r = riesz(target)
    c = kernel @ (kernel.T @ r)
    nrm = float(np.linalg.norm(c))
    if kernel.shape[1] == 0 or nrm <= cfg.kernel_tol * max(float(np.linalg.norm(r)), 1.0):
        raise BasisError(f"面 {j} 的核空间为空, 无法构造 q_j")
    return BaryPoly.combination(c / nrm, basis)


def build_q_optimal(
    s: Simplex,
    w: WeightSpec,
    j: int,
    psi: Sequence[BaryPoly],
    i_of_j: Optional[int] = None,
    offset: Optional[int] = None,
) -> BaryPoly:
    """q_j* = (I - Π_{1,ω_j})(ψ_{i(j)}|F_j) / ‖·‖_{ω_j}"""
    _check_simplex(s, w)
    d = w.dim
    off = basis_config.bubble_offset if offset is None else offset
    i = coupled_bubble(d, j, off) if i_of_j is None else i_of_j
    fw = face_density(w, j).weight
    trace = restrict_to_face(psi[i], j)
    resid = p1_residual(fw, trace)
    nrm = np.sqrt(max(weighted_inner(fw, resid, resid), 0.0))
    if nrm <= 1e-12:
        raise BasisError(f"face-degenerate ψ: ψ_{i} 在 F_{j} 上的 S₂ 分量为零")
    return resid.scale(1.0 / nrm)


# ============================================================
# ρ*
# ============================================================

def build_rho_optimal(s: Simplex, w: WeightSpec, generators: Sequence[BaryPoly]) -> List[BaryPoly]:
    """ρ_l* = (I - Π₁)(p_l) / ‖·‖_Ω, G* 对角线为 1。"""
    _check_simplex(s, w)
    out = []
    for k, p in enumerate(generators):
        resid = p1_residual(w, p)
        nrm = np.sqrt(max(weighted_inner(w, resid, resid), 0.0))
        if nrm <= 1e-12:
            raise BasisError(f"生成元 {k} 的 P₁ 正交投影为零")
        out.append(resid.scale(1.0 / nrm))
    return out


# ============================================================
# M 归一化
# ============================================================

def face_matrix(w: WeightSpec, psi: Sequence[BaryPoly], q: Sequence[BaryPoly]) -> np.ndarray:
    """[M]_{ji} = ⟨ψ_i|F_j, q_j⟩_{ω_j}"""
    d = w.dim
    m = np.zeros((d + 1, len(psi)))
    for j in range(d + 1):
        fw = face_density(w, j).weight
        for i, p in enumerate(psi):
            m[j, i] = weighted_inner(fw, restrict_to_face(p, j), q[j])
    return m


def normalize_m(bundle: BasisBundle) -> BasisBundle:
    """ψ̃ = ψ M⁻¹, 于是 M̃ = I; W 与 V ⊥ W 不变。"""
    m = face_matrix(bundle.weight, bundle.psi, bundle.q)
    try:
        m_inv = np.linalg.inv(m)
    except np.linalg.LinAlgError:
        raise BasisError("M 奇异, 不能归一化")
    psi = tuple(BaryPoly.combination(m_inv[:, i], bundle.psi) for i in range(m_inv.shape[1]))
    return bundle.replace(psi=psi, m_normalized=True)


# ============================================================
# 工厂
# ============================================================

def build_bundle(
    s: Simplex,
    w: WeightSpec,
    mode: BasisMode = BasisMode.CANONICAL,
    config: Optional[BasisConfig] = None,
    normalize: Optional[bool] = None,
) -> BasisBundle:
    cfg = config or basis_config
    if isinstance(mode, str):
        mode = BasisMode.parse(mode)
    d = w.dim
    off = cfg.bubble_offset
    psi = build_psi(s, w, offset=off, config=cfg)

    if mode is BasisMode.CANONICAL:
        _, bundle = split_V_W(s, w, psi, config=cfg)
    elif mode is BasisMode.RAW:
        bundle = BasisBundle(
            weight=w,
            simplex=s,
            psi=tuple(psi),
            rho=tuple(s2_pair_functions(w, noncyclic_pairs(d))),
            q=tuple(build_q_default(s, w, j, offset=off, config=cfg) for j in range(d + 1)),
            bubble_offset=off,
            mode=mode.value,
        )
    else:
        generators = []
        for a, b in noncyclic_pairs(d):
            e = [0] * (d + 1)
            e[a] += 1
            e[b] += 1
            generators.append(BaryPoly.monomial(e))
        bundle = BasisBundle(
            weight=w,
            simplex=s,
            psi=tuple(psi),
            rho=tuple(build_rho_optimal(s, w, generators)),
            q=tuple(build_q_optimal(s, w, j, psi, offset=off) for j in range(d + 1)),
            bubble_offset=off,
            mode=mode.value,
        )

    if cfg.normalize_m if normalize is None else normalize:
        bundle = normalize_m(bundle)
    logger.debug("basis bundle built: mode=%s weight=%s counts=%s", bundle.mode, w.label(), bundle.counts())
    return bundle


def orthogonality_defects(bundle: BasisBundle) -> Dict[str, float]:
    """ψ, ρ 对 P₁(Ω) 以及 q_j 对 P₁(ω_j) 的最大正交缺陷。"""
    w = bundle.weight
    d = w.dim
    lam = _coords(d + 1)
    vol = max(
        (abs(weighted_inner(w, p, l)) for p in list(bundle.psi) + list(bundle.rho) for l in lam),
        default=0.0,
    )
    face = 0.0
    for j, qj in enumerate(bundle.q):
        fw = face_density(w, j).weight
        face = max(face, abs(expectation(fw, qj)))
        for mu in _coords(d):
            face = max(face, abs(weighted_inner(fw, qj, mu)))
    return {"volume": vol, "face": face}


def orthogonality_ok(bundle: BasisBundle, config: Optional[BasisConfig] = None) -> bool:
    """两类正交缺陷都不超过 orth_tol (HISTO_ORTH_TOL)。"""
    cfg = config or basis_config
    defects = orthogonality_defects(bundle)
    ok = max(defects.values()) <= cfg.orth_tol
    if not ok:
        logger.warning("基函数正交缺陷超限: %s (orth_tol=%.1e)", defects, cfg.orth_tol)
    return ok
