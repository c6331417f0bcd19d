# 文件路径: app/core/config.py
"""
应用配置模块 - 统一配置中心

覆盖:
- 求积阶数 (数据泛函 / L² 误差)
- 基函数构造 (bubble 偏移, M 归一化)
- 稳定性分析容差 (行列式, 对称性, SPD 判定)
- 参数优化 (Nelder–Mead, 对数空间搜索盒)
- 网格生成 (准均匀扰动, 重采样)
- 输出 (CSV/JSON 目录, 文件锁超时)

所有字段都可以用 HISTO_* 环境变量覆盖 (支持 .env)。
"""
import os
from dataclasses import dataclass, field
from typing import Optional, Tuple
from dotenv import load_dotenv

# 加载 .env 文件
load_dotenv()


def _env_bool(name: str, default: bool) -> bool:
    """从环境变量读取布尔值。"""
    value = os.getenv(name)
    if value is None:
        return default
    return value.strip().lower() in {"1", "true", "yes", "on"}


def _env_int(name: str, default: int) -> int:
    """从环境变量读取整数值。"""
    value = os.getenv(name)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        return default


def _env_float(name: str, default: float) -> float:
    """从环境变量读取浮点值。"""
    value = os.getenv(name)
    if value is None:
        return default
    try:
        return float(value)
    except ValueError:
        return default


def _env_str(name: str, default: str) -> str:
    value = os.getenv(name)
    return default if value is None or not value.strip() else value.strip()


# ============================================================
# 求积配置
# ============================================================

@dataclass
class QuadratureConfig:
    """塌缩 Gauss–Jacobi 求积阶数 (每个轴的点数)"""
    data_npts: int = field(default_factory=lambda: _env_int("HISTO_DATA_NPTS", 5))    # 数据泛函: 9 阶精确
    error_npts: int = field(default_factory=lambda: _env_int("HISTO_ERROR_NPTS", 6))  # L² 误差: 11 阶精确


# ============================================================
# 基函数配置
# ============================================================

@dataclass
class BasisConfig:
    """
    基函数构造配置

    bubble_offset:
    - 0: g_j = λ_j λ_{j+1}  (定理中的写法)
    - 1: g_j = λ_{j+1} λ_{j+2}  (d=2/d=3 算例的写法, M 为对角阵)
    """
    bubble_offset: int = field(default_factory=lambda: _env_int("HISTO_BUBBLE_OFFSET", 0))
    normalize_m: bool = field(default_factory=lambda: _env_bool("HISTO_NORMALIZE_M", False))
    orth_tol: float = field(default_factory=lambda: _env_float("HISTO_ORTH_TOL", 1e-11))
    independence_tol: float = 1e-12       # 归一化 Gram 行列式下限
    kernel_tol: float = 1e-12             # 面核空间为空的判定阈值


# ============================================================
# 稳定性分析配置
# ============================================================

@dataclass
class StabilityConfig:
    """Schur 约化与 inf-sup 常数的数值容差"""
    det_rel_tol: float = field(default_factory=lambda: _env_float("HISTO_DET_REL_TOL", 1e-10))
    sym_tol: float = field(default_factory=lambda: _env_float("HISTO_SYM_TOL", 1e-9))
    spd_rel_tol: float = field(default_factory=lambda: _env_float("HISTO_SPD_REL_TOL", 1e-13))
    alpha_reg: float = field(default_factory=lambda: _env_float("HISTO_ALPHA_REG", 0.0))
    eig_max_sweeps: int = 100              # Jacobi 最大扫描轮数
    eig_off_tol: float = 1e-13             # 非对角范数相对阈值


# ============================================================
# 参数优化配置
# ============================================================

@dataclass
class OptimizerConfig:
    """
    参数优化配置 (p = (α, θ, υ), 在 log 空间搜索)

    method 为 scipy.optimize.minimize 的无导数方法名, 默认 Nelder-Mead。
    """
    method: str = field(default_factory=lambda: _env_str("HISTO_OPT_METHOD", "Nelder-Mead"))
    budget: int = field(default_factory=lambda: _env_int("HISTO_OPT_BUDGET", 200))
    xatol: float = field(default_factory=lambda: _env_float("HISTO_OPT_XATOL", 1e-6))
    basis_mode: str = field(default_factory=lambda: _env_str("HISTO_OPT_BASIS_MODE", "raw"))
    initial_step: float = 0.2                        # 初始单纯形在 log 空间的边长
    alpha_box: Tuple[float, float] = (0.75, 8.0)     # α 搜索盒
    scale_box: Tuple[float, float] = (0.1, 10.0)     # θ, υ 搜索盒


# ============================================================
# 网格配置
# ============================================================

@dataclass
class MeshConfig:
    """准均匀网格扰动配置"""
    delta: float = field(default_factory=lambda: _env_float("HISTO_MESH_DELTA", 0.2))
    seed: int = field(default_factory=lambda: _env_int("HISTO_MESH_SEED", 0))
    max_resample: int = 10                 # 同一 δ 下最大重采样次数
    max_shrink: int = 4                    # δ 最多缩小次数
    shrink_factor: float = 0.5


# ============================================================
# 输出配置
# ============================================================

@dataclass
class OutputConfig:
    """结果落盘配置"""
    output_dir: str = field(default_factory=lambda: _env_str("HISTO_OUTPUT_DIR", "results"))
    lock_timeout: float = field(default_factory=lambda: _env_float("HISTO_LOCK_TIMEOUT", 10.0))
    float_format: str = "%.12e"
    log_level: Optional[str] = os.getenv("HISTO_LOG_LEVEL")


# ============================================================
# 全局配置实例
# ============================================================

quadrature_config = QuadratureConfig()
basis_config = BasisConfig()
stability_config = StabilityConfig()
optimizer_config = OptimizerConfig()
mesh_config = MeshConfig()
output_config = OutputConfig()
