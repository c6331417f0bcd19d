# -*- coding: utf-8 -*-
"""
小规模稠密线性代数

矩阵维度一般不超过 10x10 (d=3 时 H 为 6x6), 因此特征值用循环 Jacobi 旋转,
结果与平台 LAPACK 无关, 测试可以逐位稳定。
"""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from app.core.config import StabilityConfig, stability_config
from app.core.exceptions import LinearAlgebraError

logger = logging.getLogger(__name__)


def _off_norm(a: np.ndarray) -> float:
    return float(np.sqrt(max(np.sum(a * a) - np.sum(np.diag(a) ** 2), 0.0)))


def sym_eig(
    a: np.ndarray,
    config: Optional[StabilityConfig] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    对称矩阵特征分解 (循环 Jacobi)

    Returns:
        (eigenvalues 升序, eigenvectors 按列正交)
    """
    cfg = config or stability_config
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise LinearAlgebraError(f"sym_eig 需要方阵, 实际形状 {a.shape}")
    n = a.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))

    scale = float(np.linalg.norm(a))
    if np.linalg.norm(a - a.T) > cfg.sym_tol * max(scale, np.finfo(float).tiny):
        raise LinearAlgebraError("sym_eig 输入不对称")
    a = 0.5 * (a + a.T)
    v = np.eye(n)
    if scale == 0.0:
        return np.zeros(n), v

    target = cfg.eig_off_tol * scale
    for _ in range(cfg.eig_max_sweeps):
        if _off_norm(a) <= target:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                sign = 1.0 if theta >= 0.0 else -1.0
                t = sign / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        logger.warning("Jacobi 未在 %d 轮内收敛 (off=%.3e)", cfg.eig_max_sweeps, _off_norm(a))

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def inv_sqrt_spd(g: np.ndarray, config: Optional[StabilityConfig] = None) -> np.ndarray:
    """G^{-1/2}, 最小特征值 <= spd_rel_tol * 最大特征值时视为数值奇异。"""
    cfg = config or stability_config
    w, q = sym_eig(g, cfg)
    if w.size == 0:
        return np.zeros((0, 0))
    if w[0] <= cfg.spd_rel_tol * max(abs(w[-1]), np.finfo(float).tiny):
        raise LinearAlgebraError(
            f"numerically singular Gram: λ_min={w[0]:.3e}, λ_max={w[-1]:.3e}"
        )
    out = (q / np.sqrt(w)) @ q.T
    return 0.5 * (out + out.T)


def is_spd(g: np.ndarray, config: Optional[StabilityConfig] = None) -> bool:
    cfg = config or stability_config
    if g.size == 0:
        return True
    try:
        w, _ = sym_eig(g, cfg)
    except LinearAlgebraError:
        return False
    return bool(w[0] > cfg.spd_rel_tol * max(abs(w[-1]), np.finfo(float).tiny))


def det_tolerance(m: np.ndarray, rel_tol: float) -> float:
    """rel_tol * (行范数几何平均)^n, 与仿射缩放一致的行列式阈值。"""
    n = m.shape[0]
    if n == 0:
        return 0.0
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0.0):
        return np.inf
    return float(rel_tol * np.exp(np.sum(np.log(norms))))


def cond2(m: np.ndarray) -> float:
    """
    2-范数条件数 σ_max / σ_min。

    等于 mᵀm 的 √(λ_max/λ_min); 由 SVD 计算, 不显式形成 mᵀm。
    """
    if m.size == 0:
        return 1.0
    try:
        sv = np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as e:
        raise LinearAlgebraError(f"SVD 不收敛: {e}")
    if sv[-1] <= 0.0:
        return float("inf")
    return float(sv[0] / sv[-1])
