# -*- coding: utf-8 -*-
"""
矩系统服务

职责:
- 组装块矩阵 A, G, C, C̃, M, H 以及面平均行 IfaceQuad
- 可解性判定: det A, T = M - C̃G⁻¹C, det H = det G · det T
- 谱稳定性: K 块, S = K₁₁ - K₁₂K₂₂⁻¹K₂₁, Ŝ = G^{-1/2} S G^{-1/2}, β = √σ_min(Ŝ)
- 参数缩放 H̃ = diag(D_V, D_L) H 与 κ₂(H̃)
- 正则化 β_reg, Rayleigh 抽样诊断, A 的闭式公式

不负责:
- 基函数构造 (见 bases)
- 局部重构求解 (见 histopolation)

所有块只依赖重心坐标系数与权重, 与单纯形的仿射形状无关。
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import StabilityConfig, stability_config
from app.core.exceptions import ConfigError, LinearAlgebraError, MomentsError, StabilityError, UnisolvenceError
from app.schemas.histo import BetaCurveRow
from app.services.barypoly import BaryPoly, restrict_to_face
from app.services.bases import BasisBundle, BasisMode, build_bundle, face_matrix
from app.services.geometry import Simplex, reference_simplex
from app.services.moments import WeightSpec, expectation, face_density, gram, weighted_inner
from app.utils.linalg import cond2, det_tolerance, inv_sqrt_spd, is_spd, sym_eig

logger = logging.getLogger(__name__)


# ============================================================
# 数据模型
# ============================================================

@dataclass(frozen=True, eq=False)
class MomentSystem:
    """
    H (ξ; γ) = (V; L) 的块结构:

        H = [[G, C], [C̃, M]]

    IfaceQuad 第 j 行为 I_j 作用于 (ρ_1..ρ_d̃, ψ_0..ψ_d)。
    """
    bundle: BasisBundle
    A: np.ndarray
    G: np.ndarray
    C: np.ndarray
    Ctilde: np.ndarray
    M: np.ndarray
    H: np.ndarray
    IfaceQuad: np.ndarray

    @property
    def d(self) -> int:
        return self.bundle.d

    @property
    def dtilde(self) -> int:
        return self.G.shape[0]


@dataclass
class ScaledSystem:
    theta: np.ndarray
    upsilon: np.ndarray
    H: np.ndarray
    kappa: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta.tolist(),
            "upsilon": self.upsilon.tolist(),
            "kappa": _finite_or_none(self.kappa),
        }


@dataclass
class StabilityReport:
    """unisolvence() 只填充行列式与判定字段; stability() 填充全部字段。"""
    detA: float
    detG: float
    detT: float
    detH: float
    unisolvent: bool
    diagnosis: str = ""
    T: Optional[np.ndarray] = None
    K11: Optional[np.ndarray] = None
    K12: Optional[np.ndarray] = None
    K21: Optional[np.ndarray] = None
    K22: Optional[np.ndarray] = None
    S: Optional[np.ndarray] = None
    Shat: Optional[np.ndarray] = None
    beta: Optional[float] = None
    kappaH: Optional[float] = None
    margins: Optional[Dict[str, float]] = None
    scaled: Optional[ScaledSystem] = None

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "unisolvent": self.unisolvent,
            "diagnosis": self.diagnosis,
            "detA": _finite_or_none(self.detA),
            "detG": _finite_or_none(self.detG),
            "detT": _finite_or_none(self.detT),
            "detH": _finite_or_none(self.detH),
            "beta": _finite_or_none(self.beta),
            "kappaH": _finite_or_none(self.kappaH),
        }
        if self.margins:
            out["margins"] = {k: _finite_or_none(v) for k, v in self.margins.items()}
        if self.scaled is not None:
            out["scaled"] = self.scaled.to_dict()
        return out


def _finite_or_none(x: Optional[float]) -> Optional[float]:
    if x is None or not math.isfinite(x):
        return None
    return float(x)


# ============================================================
# 组装
# ============================================================

def face_average_matrix(w: WeightSpec) -> np.ndarray:
    """[A]_{ji} = I_j(λ_i) = ⟨λ_i|F_j, 1⟩_{ω_j}"""
    n = w.dim + 1
    a = np.zeros((n, n))
    for j in range(n):
        fw = face_density(w, j).weight
        for i in range(n):
            if i != j:
                a[j, i] = expectation(fw, restrict_to_face(BaryPoly.coordinate(n, i), j))
    return a


def assemble(s: Simplex, w: WeightSpec, bundle: BasisBundle) -> MomentSystem:
    """全部矩阵元素都用闭式矩精确计算。"""
    if s.dim != w.dim:
        raise MomentsError(f"单纯形维数 d={s.dim} 与权重维数 {w.dim} 不符")
    if bundle.weight != w:
        raise MomentsError(f"基函数权重 {bundle.weight.label()} 与 {w.label()} 不一致")
    d = w.dim
    n = d + 1
    rho, psi, q = list(bundle.rho), list(bundle.psi), list(bundle.q)
    dt = len(rho)

    faces = [face_density(w, j).weight for j in range(n)]
    a = face_average_matrix(w)

    g = gram(w, rho) if dt else np.zeros((0, 0))
    c = gram(w, rho, psi) if dt else np.zeros((0, n))
    ct = np.zeros((n, dt))
    for j in range(n):
        for l in range(dt):
            ct[j, l] = weighted_inner(faces[j], restrict_to_face(rho[l], j), q[j])
    m = face_matrix(w, psi, q)

    h = np.zeros((dt + n, dt + n))
    h[:dt, :dt] = g
    h[:dt, dt:] = c
    h[dt:, :dt] = ct
    h[dt:, dt:] = m

    iface = np.zeros((n, dt + n))
    for j in range(n):
        for k, p in enumerate(rho + psi):
            iface[j, k] = expectation(faces[j], restrict_to_face(p, j))

    return MomentSystem(bundle=bundle, A=a, G=g, C=c, Ctilde=ct, M=m, H=h, IfaceQuad=iface)


# ============================================================
# 可解性
# ============================================================

def _det(m: np.ndarray) -> float:
    return float(np.linalg.det(m)) if m.size else 1.0


def unisolvence(sys: MomentSystem, config: Optional[StabilityConfig] = None) -> StabilityReport:
    """
    unisolvent ⇔ |det A| > ε_A 且 |det T| > ε_T (阈值按行范数相对缩放)

    G 非正定时不抛异常, 返回 unisolvent=False 与诊断信息。
    """
    cfg = config or stability_config
    det_a = _det(sys.A)
    det_g = _det(sys.G)
    det_h = _det(sys.H)
    tol_a = det_tolerance(sys.A, cfg.det_rel_tol)

    if not is_spd(sys.G, cfg):
        logger.warning("G 非正定 (det G = %.3e)", det_g)
        return StabilityReport(
            detA=det_a, detG=det_g, detT=float("nan"), detH=det_h,
            unisolvent=False, diagnosis="G not SPD",
            margins={"A": abs(det_a) / tol_a if tol_a else float("inf")},
        )

    if sys.dtilde:
        t = sys.M - sys.Ctilde @ np.linalg.solve(sys.G, sys.C)
    else:
        t = sys.M.copy()
    det_t = _det(t)
    tol_t = det_tolerance(t, cfg.det_rel_tol)

    ok_a = abs(det_a) > tol_a
    ok_t = abs(det_t) > tol_t
    diagnosis = ""
    if not ok_a:
        diagnosis = "A singular"
    elif not ok_t:
        diagnosis = "Schur complement T singular"

    if ok_a and ok_t and abs(det_h) <= det_tolerance(sys.H, cfg.det_rel_tol):
        logger.warning("A, T 可逆但 det H = %.3e 接近零", det_h)

    return StabilityReport(
        detA=det_a, detG=det_g, detT=det_t, detH=det_h,
        unisolvent=bool(ok_a and ok_t), diagnosis=diagnosis, T=t,
        margins={
            "A": abs(det_a) / tol_a if tol_a else float("inf"),
            "T": abs(det_t) / tol_t if tol_t else float("inf"),
        },
    )


# ============================================================
# 缩放
# ============================================================

def _check_scales(sys: MomentSystem, theta, upsilon) -> Tuple[np.ndarray, np.ndarray]:
    theta = np.ones(sys.d + 1) if theta is None else np.asarray(theta, dtype=float)
    upsilon = np.ones(sys.dtilde) if upsilon is None else np.asarray(upsilon, dtype=float)
    if theta.shape != (sys.d + 1,) or upsilon.shape != (sys.dtilde,):
        raise ConfigError(f"缩放长度错误: θ {theta.shape}, υ {upsilon.shape}")
    if np.any(theta <= 0.0) or np.any(upsilon <= 0.0) or not np.all(np.isfinite(np.r_[theta, upsilon])):
        raise ConfigError("θ, υ 必须全部为正")
    return theta, upsilon


def scale(
    sys: MomentSystem,
    theta: Optional[Sequence[float]] = None,
    upsilon: Optional[Sequence[float]] = None,
) -> ScaledSystem:
    """H̃ = diag(D_V, D_L) H, D_V = diag(υ), D_L = diag(θ)"""
    theta, upsilon = _check_scales(sys, theta, upsilon)
    h_scaled = np.concatenate([upsilon, theta])[:, None] * sys.H
    return ScaledSystem(theta=theta, upsilon=upsilon, H=h_scaled, kappa=cond2(h_scaled))


# ============================================================
# 稳定性
# ============================================================

def stability(
    sys: MomentSystem,
    theta: Optional[Sequence[float]] = None,
    upsilon: Optional[Sequence[float]] = None,
    config: Optional[StabilityConfig] = None,
) -> StabilityReport:
    """
    K = H̃ᵀ diag(G, MᵀM) H̃, 未缩放时即

        K₁₁ = C̃ᵀ(MᵀM)C̃ + G³
        K₁₂ = C̃ᵀ(MᵀM)M + G²C
        K₂₂ = Mᵀ(MᵀM)M + CᵀGC

    S = K₁₁ - K₁₂K₂₂⁻¹K₂₁, Ŝ = G^{-1/2} S G^{-1/2}, β = √max(σ_min(Ŝ), 0)。
    d̃ = 0 时没有内部自由度, β = +∞。
    """
    cfg = config or stability_config
    report = unisolvence(sys, cfg)
    if report.diagnosis == "G not SPD":
        raise UnisolvenceError("G not SPD: 内部 Gram 矩阵非正定")
    det_m = _det(sys.M)
    if abs(det_m) <= det_tolerance(sys.M, cfg.det_rel_tol):
        raise StabilityError(f"face functionals dependent: M 奇异 (det M = {det_m:.3e})")

    scaled = scale(sys, theta, upsilon)
    dt = sys.dtilde
    n_face = sys.M.T @ sys.M
    weight = np.zeros_like(sys.H)
    weight[:dt, :dt] = sys.G
    weight[dt:, dt:] = n_face
    k = scaled.H.T @ weight @ scaled.H
    k = 0.5 * (k + k.T)
    k11, k12 = k[:dt, :dt], k[:dt, dt:]
    k21, k22 = k[dt:, :dt], k[dt:, dt:]

    try:
        s_mat = k11 - k12 @ np.linalg.solve(k22, k21)
    except np.linalg.LinAlgError as e:
        raise StabilityError(f"K₂₂ 奇异: {e}")

    if dt == 0:
        beta = float("inf")
        shat = np.zeros((0, 0))
    else:
        s_norm = float(np.linalg.norm(s_mat))
        defect = float(np.linalg.norm(s_mat - s_mat.T))
        if defect > cfg.sym_tol * max(s_norm, np.finfo(float).tiny):
            logger.warning("S 对称性缺陷 %.3e 超过舍入水平 (‖S‖=%.3e), 已对称化", defect, s_norm)
        s_mat = 0.5 * (s_mat + s_mat.T)
        g_ih = inv_sqrt_spd(sys.G, cfg)
        shat = g_ih @ s_mat @ g_ih
        shat = 0.5 * (shat + shat.T)
        eig, _ = sym_eig(shat, cfg)
        beta = float(np.sqrt(max(eig[0], 0.0)))

    report.K11, report.K12, report.K21, report.K22 = k11, k12, k21, k22
    report.S = s_mat
    report.Shat = shat
    report.beta = beta
    report.kappaH = scaled.kappa
    report.scaled = scaled
    logger.debug("stability: beta=%.6e kappa=%.6e unisolvent=%s", beta, scaled.kappa, report.unisolvent)
    return report


def regularized_beta(
    sys: MomentSystem,
    alpha_reg: Optional[float] = None,
    report: Optional[StabilityReport] = None,
    config: Optional[StabilityConfig] = None,
) -> float:
    """β_reg = √σ_min(G^{-1/2}(S + α_reg I)G^{-1/2}); α_reg 缺省取 StabilityConfig.alpha_reg"""
    if alpha_reg is None:
        alpha_reg = (config or stability_config).alpha_reg
    if alpha_reg < 0.0 or not math.isfinite(alpha_reg):
        raise ConfigError(f"α_reg 必须 >= 0: {alpha_reg}")
    report = report if report is not None and report.S is not None else stability(sys, config=config)
    if sys.dtilde == 0:
        return float("inf")
    g_ih = inv_sqrt_spd(sys.G, config)
    shifted = g_ih @ (report.S + alpha_reg * np.eye(sys.dtilde)) @ g_ih
    eig, _ = sym_eig(0.5 * (shifted + shifted.T), config)
    return float(np.sqrt(max(eig[0], 0.0)))


def rayleigh_sample_min(
    sys: MomentSystem,
    report: StabilityReport,
    n_samples: int = 100_000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """min ξᵀSξ over 随机方向, 约束 ξᵀGξ = 1; 结果 >= β²。"""
    if report.S is None:
        raise LinearAlgebraError("需要先调用 stability() 计算 S")
    rng = rng or np.random.default_rng()
    xi = rng.standard_normal((n_samples, sys.dtilde))
    g_norm = np.einsum("ni,ij,nj->n", xi, sys.G, xi)
    xi = xi / np.sqrt(g_norm)[:, None]
    vals = np.einsum("ni,ij,nj->n", xi, report.S, xi)
    return float(vals.min())


# ============================================================
# 闭式公式 (交叉验证用)
# ============================================================

def dirichlet_A_formula(alpha: Sequence[float]) -> np.ndarray:
    """[A]_{ji} = α_i / (S - α_j), 对角为 0"""
    alpha = np.asarray(alpha, dtype=float)
    a = alpha[None, :] / (alpha.sum() - alpha)[:, None]
    np.fill_diagonal(a, 0.0)
    return a


def dirichlet_det_A(alpha: Sequence[float]) -> float:
    """det A = (-1)^d · d · ∏ α_i / (S - α_i)"""
    alpha = np.asarray(alpha, dtype=float)
    d = alpha.size - 1
    return float((-1) ** d * d * np.prod(alpha / (alpha.sum() - alpha)))


def affine_A_formula(alpha: Sequence[float]) -> np.ndarray:
    """[A]_{ji} = (S_j + α_i) / ((d+1) S_j), S_j = S - α_j"""
    alpha = np.asarray(alpha, dtype=float)
    d = alpha.size - 1
    s_j = alpha.sum() - alpha
    a = (s_j[:, None] + alpha[None, :]) / ((d + 1) * s_j[:, None])
    np.fill_diagonal(a, 0.0)
    return a


# ============================================================
# β(α) 扫描
# ============================================================

def beta_curve(
    alphas: Sequence[float],
    d: int = 3,
    basis_mode: BasisMode = BasisMode.RAW,
    alpha_reg: Optional[float] = None,
    simplex: Optional[Simplex] = None,
) -> List[BetaCurveRow]:
    """对称 Dirichlet α·1 在参考单纯形上的 β 与 β_reg。"""
    if alpha_reg is None:
        alpha_reg = stability_config.alpha_reg
    s = simplex or reference_simplex(d)
    rows = []
    for alpha in alphas:
        w = WeightSpec.dirichlet([float(alpha)] * (d + 1))
        sys = assemble(s, w, build_bundle(s, w, basis_mode))
        report = stability(sys)
        beta_reg = regularized_beta(sys, alpha_reg, report) if alpha_reg > 0.0 else None
        rows.append(BetaCurveRow(alpha=float(alpha), beta=report.beta, beta_reg=beta_reg))
        logger.debug("beta curve: alpha=%g beta=%.6e", alpha, report.beta)
    return rows
