# -*- coding: utf-8 -*-
"""
局部直方插值 (histopolation) 服务

职责:
- 单个单纯形上的二次增强重构: p = ∑a_iλ_i + ∑γ_jψ_j + ∑ξ_kρ_k
  第一步 H(ξ; γ) = (V; L), 第二步 A a = I - IfaceQuad (ξ; γ)
- 经典线性重构: A a = I
- 网格上的全局 L² 误差与收敛阶

所有系数系统只依赖重心坐标, 因此在参考单纯形上组装并分解一次,
然后对网格所有单元向量化求解。
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from app.core.config import QuadratureConfig, StabilityConfig, quadrature_config, stability_config
from app.core.exceptions import ConfigError, HistopolationError, UnisolvenceError
from app.schemas.histo import ConvergenceTable, ErrorReport
from app.services.barypoly import BaryPoly
from app.services.bases import BasisBundle, BasisMode, build_bundle
from app.services.geometry import Simplex, reference_simplex
from app.services.mesh import MeshKind, TetMesh, build_mesh, signed_volumes
from app.services.moment_system import MomentSystem, assemble, face_average_matrix, unisolvence
from app.services.moments import DataVector, FunctionalQuadrature, WeightSpec, reference_rule
from app.services.test_functions import get_function
from app.utils.linalg import det_tolerance

logger = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray], np.ndarray]

DEFAULT_BASIS_MODE = BasisMode.CANONICAL


class LocalScheme(Enum):
    LINEAR = "linear"
    QUADRATIC = "quadratic"

    @classmethod
    def parse(cls, text: str) -> "LocalScheme":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigError(f"未知格式: {text!r} (可选 linear/quadratic)")


@dataclass
class LocalSolution:
    element: int
    a: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray

    def to_poly(self, bundle: BasisBundle) -> BaryPoly:
        n = bundle.d + 1
        lam = [BaryPoly.coordinate(n, i) for i in range(n)]
        coeffs = np.concatenate([self.a, self.gamma, self.xi])
        return BaryPoly.combination(coeffs, lam + list(bundle.psi) + list(bundle.rho))


# ============================================================
# 单个单纯形
# ============================================================

def _check_unisolvent(system: MomentSystem, config: Optional[StabilityConfig]) -> None:
    report = unisolvence(system, config)
    if not report.unisolvent:
        raise UnisolvenceError(f"矩系统不可解: {report.diagnosis}")


def solve_local_quadratic(
    s: Simplex,
    w: WeightSpec,
    bundle: BasisBundle,
    data: DataVector,
    system: Optional[MomentSystem] = None,
    config: Optional[StabilityConfig] = None,
    element: int = 0,
) -> LocalSolution:
    """两步消元; 对 P₂ 中任意 f 精确重现。element 为网格中的单元编号。"""
    system = system or assemble(s, w, bundle)
    _check_unisolvent(system, config)
    dt = system.dtilde
    xi_gamma = lu_solve(lu_factor(system.H), np.concatenate([data.V, data.L]))
    a = lu_solve(lu_factor(system.A), data.I - system.IfaceQuad @ xi_gamma)
    return LocalSolution(element=element, a=a, gamma=xi_gamma[dt:], xi=xi_gamma[:dt])


def solve_local_linear(
    s: Simplex,
    w: WeightSpec,
    data: Union[DataVector, Sequence[float]],
    config: Optional[StabilityConfig] = None,
) -> np.ndarray:
    """p ∈ P₁ 满足 I_j(p) = I_j(f)"""
    cfg = config or stability_config
    if s.dim != w.dim:
        raise ConfigError(f"单纯形维数 d={s.dim} 与权重维数 {w.dim} 不符")
    i_data = data.I if isinstance(data, DataVector) else np.asarray(data, dtype=float)
    a_mat = face_average_matrix(w)
    if abs(np.linalg.det(a_mat)) <= det_tolerance(a_mat, cfg.det_rel_tol):
        raise UnisolvenceError("A singular: 面平均泛函线性相关")
    return lu_solve(lu_factor(a_mat), i_data)


# ============================================================
# 向量化局部求解
# ============================================================

class LocalSolver:
    """
    参考单纯形上分解一次, 对 K 个单元的数据批量求解。

    系数顺序: (a_0..a_d, γ_0..γ_d, ξ_1..ξ_d̃)
    """

    def __init__(
        self,
        w: WeightSpec,
        scheme: LocalScheme = LocalScheme.QUADRATIC,
        bundle: Optional[BasisBundle] = None,
        basis_mode: BasisMode = DEFAULT_BASIS_MODE,
        config: Optional[StabilityConfig] = None,
    ) -> None:
        self.weight = w
        self.scheme = scheme
        ref = reference_simplex(w.dim)
        self.bundle = bundle or build_bundle(ref, w, basis_mode)
        self.system = assemble(ref, w, self.bundle)
        if scheme is LocalScheme.QUADRATIC:
            _check_unisolvent(self.system, config)
            self._h_lu = lu_factor(self.system.H)
        else:
            cfg = config or stability_config
            if abs(np.linalg.det(self.system.A)) <= det_tolerance(self.system.A, cfg.det_rel_tol):
                raise UnisolvenceError("A singular: 面平均泛函线性相关")
        self._a_lu = lu_factor(self.system.A)

    def solve(self, i_data: np.ndarray, l_data: Optional[np.ndarray] = None,
              v_data: Optional[np.ndarray] = None) -> np.ndarray:
        """(K, d+1) 等数据 -> (K, ncoef) 系数"""
        i_data = np.atleast_2d(i_data)
        if self.scheme is LocalScheme.LINEAR:
            return lu_solve(self._a_lu, i_data.T).T
        dt = self.system.dtilde
        rhs = np.hstack([np.atleast_2d(v_data).reshape(i_data.shape[0], dt), np.atleast_2d(l_data)])
        xi_gamma = lu_solve(self._h_lu, rhs.T).T
        a = lu_solve(self._a_lu, (i_data - xi_gamma @ self.system.IfaceQuad.T).T).T
        return np.hstack([a, xi_gamma[:, dt:], xi_gamma[:, :dt]])

    def basis_values(self, bary: np.ndarray) -> np.ndarray:
        """(Q, d+1) 重心坐标 -> (Q, ncoef)"""
        cols = [bary]
        if self.scheme is LocalScheme.QUADRATIC:
            cols += [np.stack([p(bary) for p in self.bundle.psi], axis=1)]
            if self.bundle.rho:
                cols += [np.stack([r(bary) for r in self.bundle.rho], axis=1)]
        return np.hstack(cols)


# ============================================================
# 全局误差
# ============================================================

@dataclass
class GlobalError:
    scheme: str
    h: float
    error: float
    n_elements: int


def global_error(
    mesh: TetMesh,
    w: WeightSpec,
    f: ScalarField,
    scheme: LocalScheme = LocalScheme.QUADRATIC,
    quad_order: Optional[int] = None,
    basis_mode: BasisMode = DEFAULT_BASIS_MODE,
    config: Optional[QuadratureConfig] = None,
) -> GlobalError:
    """√(∑_K ∫_K (f - p_K)²), 单元之间不施加连续性。"""
    cfg = config or quadrature_config
    if isinstance(scheme, str):
        scheme = LocalScheme.parse(scheme)
    if w.dim != 3:
        raise ConfigError(f"网格实验只支持 d = 3, 实际 d = {w.dim}")
    solver = LocalSolver(w, scheme, basis_mode=basis_mode)
    stencil = FunctionalQuadrature(w, solver.bundle.q, solver.bundle.rho, npts=cfg.data_npts)

    ev = mesh.element_vertices()
    i_data, l_data, v_data = stencil.evaluate(ev, f)
    coeffs = solver.solve(i_data, l_data, v_data)

    bary, wts = reference_rule(3, quad_order or cfg.error_npts)
    pts = np.einsum("qm,kmx->kqx", bary, ev)
    f_vals = np.asarray(f(pts.reshape(-1, 3)), dtype=float).reshape(ev.shape[0], -1)
    p_vals = coeffs @ solver.basis_values(bary).T
    vols = np.abs(signed_volumes(ev))
    err2 = vols * (((f_vals - p_vals) ** 2) @ wts)

    bad = np.flatnonzero(~np.isfinite(err2))
    if bad.size:
        raise HistopolationError(f"element {int(bad[0])}: 误差非有限 (共 {bad.size} 个单元)")
    error = float(np.sqrt(err2.sum()))
    logger.debug("global error: scheme=%s K=%d h=%.4f err=%.6e", scheme.value, mesh.n_elements, mesh.h, error)
    return GlobalError(scheme=scheme.value, h=mesh.h, error=error, n_elements=mesh.n_elements)


def convergence_study(
    f: Union[int, ScalarField],
    weight: WeightSpec,
    n_list: Sequence[int],
    schemes: Sequence[LocalScheme] = (LocalScheme.LINEAR, LocalScheme.QUADRATIC),
    mesh_kind: MeshKind = MeshKind.UNIFORM,
    delta: Optional[float] = None,
    seed: Optional[int] = None,
    basis_mode: BasisMode = DEFAULT_BASIS_MODE,
) -> ConvergenceTable:
    """逐层计算误差, 阶 = log(e_i/e_{i+1}) / log(h_i/h_{i+1})"""
    if isinstance(mesh_kind, str):
        mesh_kind = MeshKind.parse(mesh_kind)
    schemes = [LocalScheme.parse(s) if isinstance(s, str) else s for s in schemes]
    if isinstance(f, int):
        label, func = f"f{f}", get_function(f)
    else:
        label, func = getattr(f, "__name__", "f"), f
    if not n_list:
        raise ConfigError("网格层列表为空")

    table = ConvergenceTable(
        function=label, weight=weight.label(), mesh_kind=mesh_kind.value,
        schemes=[s.value for s in schemes],
    )
    for n in sorted(n_list):
        mesh = build_mesh(mesh_kind, n, delta, seed)
        level = ErrorReport(n=n, h=mesh.h)
        for scheme in schemes:
            err = global_error(mesh, weight, func, scheme, basis_mode=basis_mode).error
            if scheme is LocalScheme.LINEAR:
                level.err_linear = err
            else:
                level.err_quadratic = err
        table.levels.append(level)
        logger.info(
            "level finished: %s n=%d h=%.4f linear=%s quadratic=%s",
            label, n, mesh.h, level.err_linear, level.err_quadratic,
        )
    table.fill_orders()
    return table
