# 文件路径: app/cli.py
"""
命令行入口

    python -m app.cli convergence --f 1 --n 5,9,13 --weight dirichlet:1,1,1,1
    python -m app.cli beta-curve --alphas 2:0.5:5 --alpha-reg 0.1
    python -m app.cli optimize --alpha 3 --mode max_beta --budget 200
    python -m app.cli unisolvence --weight affine:1,2,3,4

退出码: 0 成功, 2 参数/配置错误, 3 数值失败。
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from app.core.config import mesh_config, optimizer_config, output_config, stability_config
from app.core.exceptions import ConfigError, GeometryError, HistopolationError
from app.schemas.histo import BETA_CURVE_HEADER, CONVERGENCE_HEADER, is_strictly_decreasing
from app.services.bases import BasisMode, build_bundle, orthogonality_ok
from app.services.geometry import Simplex, reference_simplex
from app.services.histopolation import LocalScheme, convergence_study
from app.services.mesh import MAX_DELTA, MeshKind
from app.services.moment_system import (
    assemble,
    beta_curve,
    dirichlet_det_A,
    stability,
    unisolvence,
)
from app.services.moments import WeightKind, WeightSpec
from app.services.optimizer import ObjectiveMode, ParamVector, evaluate_point, optimize
from app.utils.locking import AtomicFileWriter

logger = logging.getLogger(__name__)


# ============================================================
# 参数解析
# ============================================================

def parse_int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"无法解析整数列表: {text!r}")


def parse_float_list(text: str) -> List[float]:
    """'2,2.5,3' 或 'start:step:stop' (含端点)"""
    try:
        if ":" in text:
            start, step, stop = (float(t) for t in text.split(":"))
            if step <= 0.0 or stop < start:
                raise ConfigError(f"非法范围: {text!r}")
            count = int(round((stop - start) / step)) + 1
            return [start + k * step for k in range(count)]
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"无法解析数值列表: {text!r}")


def parse_vertices(text: str, d: int) -> Simplex:
    """'x,y,z;x,y,z;...' -> Simplex"""
    try:
        rows = [[float(t) for t in row.split(",")] for row in text.split(";") if row.strip()]
    except ValueError:
        raise ConfigError(f"无法解析顶点: {text!r}")
    if len(rows) != d + 1 or any(len(r) != d for r in rows):
        raise ConfigError(f"需要 {d + 1} 个 {d} 维顶点: {text!r}")
    try:
        return Simplex(np.array(rows))
    except GeometryError as e:
        raise ConfigError(f"--vertices 非法: {e.message}")


@dataclass
class RunConfig:
    """校验过的运行参数"""
    command: str
    weight: Optional[WeightSpec] = None
    n_list: List[int] = field(default_factory=list)
    schemes: List[LocalScheme] = field(default_factory=list)
    mesh: MeshKind = MeshKind.UNIFORM
    delta: float = 0.0
    seed: int = 0
    f_id: int = 1
    alphas: List[float] = field(default_factory=list)
    alpha_reg: float = field(default_factory=lambda: stability_config.alpha_reg)
    mode: ObjectiveMode = ObjectiveMode.MAX_BETA
    budget: int = 0
    basis_mode: BasisMode = BasisMode.CANONICAL
    simplex: Optional[Simplex] = None
    debug_duplicate_psi: bool = False
    output: str = ""


def _default_output(name: str) -> str:
    return os.path.join(output_config.output_dir, name)


def build_run_config(args: argparse.Namespace) -> RunConfig:
    cmd = args.command
    cfg = RunConfig(command=cmd)
    d = getattr(args, "d", 3)

    if cmd == "convergence":
        cfg.weight = WeightSpec.parse(args.weight, d=3)
        cfg.n_list = parse_int_list(args.n)
        if not cfg.n_list or min(cfg.n_list) < 2:
            raise ConfigError(f"网格层 n 必须 >= 2: {args.n}")
        cfg.schemes = [LocalScheme.parse(s) for s in args.schemes.split(",") if s.strip()]
        cfg.mesh = MeshKind.parse(args.mesh)
        cfg.delta = args.delta
        if not 0.0 <= cfg.delta <= MAX_DELTA:
            raise ConfigError(f"--delta 必须在 [0, {MAX_DELTA}] 内")
        cfg.seed = args.seed
        cfg.f_id = args.f
        if not 1 <= cfg.f_id <= 9:
            raise ConfigError(f"--f 必须在 1..9 内: {cfg.f_id}")
        cfg.basis_mode = BasisMode.parse(args.basis_mode)
        cfg.output = args.output or _default_output(f"convergence_f{cfg.f_id}_{cfg.mesh.value}.csv")

    elif cmd == "beta-curve":
        cfg.alphas = parse_float_list(args.alphas)
        if not cfg.alphas or min(cfg.alphas) <= 0.0:
            raise ConfigError(f"α 必须为正: {args.alphas}")
        if args.alpha_reg is not None:
            cfg.alpha_reg = args.alpha_reg
        if cfg.alpha_reg < 0.0:
            raise ConfigError("--alpha-reg 必须 >= 0")
        cfg.basis_mode = BasisMode.parse(args.basis_mode)
        cfg.output = args.output or _default_output("beta_curve.csv")

    elif cmd == "optimize":
        alpha = parse_float_list(args.alpha)
        if len(alpha) == 1:
            alpha = alpha * (d + 1)
        cfg.weight = WeightSpec.dirichlet(alpha)
        cfg.mode = ObjectiveMode.parse(args.mode)
        cfg.budget = args.budget
        if cfg.budget < 0:
            raise ConfigError("--budget 必须 >= 0")
        cfg.basis_mode = BasisMode.parse(args.basis_mode)
        cfg.output = args.output or _default_output(f"optimize_{cfg.mode.value}.json")

    elif cmd == "unisolvence":
        cfg.weight = WeightSpec.parse(args.weight, d=d)
        cfg.simplex = parse_vertices(args.vertices, d) if args.vertices else reference_simplex(d)
        cfg.basis_mode = BasisMode.parse(args.basis_mode)
        cfg.debug_duplicate_psi = args.debug_duplicate_psi
        cfg.output = args.output or _default_output("unisolvence.json")

    else:
        raise ConfigError(f"未知命令: {cmd}")
    return cfg


# ============================================================
# 命令
# ============================================================

def cmd_convergence(cfg: RunConfig) -> int:
    print(f"📐 收敛实验: f{cfg.f_id}, 权重 {cfg.weight.label()}, 网格 {cfg.mesh.value}, n = {cfg.n_list}")
    table = convergence_study(
        cfg.f_id, cfg.weight, cfg.n_list, cfg.schemes,
        mesh_kind=cfg.mesh, delta=cfg.delta, seed=cfg.seed, basis_mode=cfg.basis_mode,
    )
    AtomicFileWriter(cfg.output).write_csv(CONVERGENCE_HEADER, table.rows())
    for row in table.rows():
        order = "-" if row[5] is None else f"{row[5]:.3f}"
        print(f"  n={row[0]:<3d} h={row[1]:.4f} {row[2]:<9s} error={row[4]:.6e} order={order}")
    print(f"✅ 已写入: {cfg.output}")
    return 0


def cmd_beta_curve(cfg: RunConfig) -> int:
    print(f"📈 β(α) 曲线: α = {cfg.alphas}, 基函数 {cfg.basis_mode.value}")
    rows = beta_curve(cfg.alphas, d=3, basis_mode=cfg.basis_mode, alpha_reg=cfg.alpha_reg)
    AtomicFileWriter(cfg.output).write_csv(BETA_CURVE_HEADER, [r.as_row() for r in rows])
    for r in rows:
        reg = "" if r.beta_reg is None else f" β_reg={r.beta_reg:.6e}"
        print(f"  α={r.alpha:<6g} β={r.beta:.6e}{reg}")
    print(f"  β 严格递减: {is_strictly_decreasing([r.beta for r in rows])}")
    print(f"✅ 已写入: {cfg.output}")
    return 0


def cmd_optimize(cfg: RunConfig) -> int:
    print(f"🔧 参数优化: 目标 {cfg.mode.value}, α0 = {list(cfg.weight.alpha)}, 预算 {cfg.budget}")
    opt_cfg = dataclasses.replace(optimizer_config, basis_mode=cfg.basis_mode.value)
    p0 = ParamVector.initial(cfg.weight.alpha)
    result = optimize(p0, cfg.mode, budget=cfg.budget, config=opt_cfg)
    normalize = cfg.mode is ObjectiveMode.MAX_BETA
    start = evaluate_point(result.p0, opt_cfg.basis_mode, normalize_scales=normalize)
    final = evaluate_point(result.p_star, opt_cfg.basis_mode, normalize_scales=normalize)
    payload = result.to_dict()
    payload["start"] = {"beta": start["beta"], "kappa": start["kappa"]}
    payload["final"] = {"beta": final["beta"], "kappa": final["kappa"]}
    AtomicFileWriter(cfg.output).write_json(payload)
    print(f"  β: {start['beta']:.6e} -> {final['beta']:.6e}")
    print(f"  κ₂: {start['kappa']:.6e} -> {final['kappa']:.6e}")
    print(f"✅ 已写入: {cfg.output} ({result.n_evals} 次评估)")
    return 0


def cmd_unisolvence(cfg: RunConfig) -> int:
    w, s = cfg.weight, cfg.simplex
    print(f"🔍 可解性分析: 权重 {w.label()}, 基函数 {cfg.basis_mode.value}")
    bundle = build_bundle(s, w, cfg.basis_mode)
    if cfg.debug_duplicate_psi:
        # 调试: 所有 ρ_k 替换为 ψ_0, 人为制造线性相关
        print("  ⚠️ debug: ρ_k := ψ_0")
        bundle = bundle.replace(rho=(bundle.psi[0],) * bundle.dtilde)
    sys_ = assemble(s, w, bundle)
    report = unisolvence(sys_)
    if report.unisolvent:
        report = stability(sys_)

    payload = {"weight": w.label(), "basis_mode": cfg.basis_mode.value, "verdict": report.unisolvent}
    payload["orthogonality_ok"] = orthogonality_ok(bundle)
    payload.update(report.to_dict())
    if w.kind in (WeightKind.DIRICHLET, WeightKind.CONSTANT):
        payload["detA_formula"] = dirichlet_det_A(w.alpha)
    AtomicFileWriter(cfg.output).write_json(payload)

    mark = "✅" if report.unisolvent else "❌"
    print(f"  det A = {report.detA:.6e}, det T = {report.detT:.6e}, det H = {report.detH:.6e}")
    if report.beta is not None:
        print(f"  β = {report.beta:.6e}")
    print(f"{mark} unisolvent = {report.unisolvent} {report.diagnosis}".rstrip())
    print(f"📝 已写入: {cfg.output}")
    return 0


COMMANDS = {
    "convergence": cmd_convergence,
    "beta-curve": cmd_beta_curve,
    "optimize": cmd_optimize,
    "unisolvence": cmd_unisolvence,
}


# ============================================================
# 入口
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="python -m app.cli", description="加权增强二次 histopolation 实验工具")
    parser.add_argument("--log-level", default=output_config.log_level or "WARNING",
                        help="日志级别 (DEBUG/INFO/WARNING/ERROR)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convergence", help="L² 收敛实验, 输出 CSV")
    p.add_argument("--f", type=int, default=1, help="测试函数编号 1..9")
    p.add_argument("--n", default="5,9,13", help="网格层, 逗号分隔")
    p.add_argument("--weight", default="dirichlet:1,1,1,1", help="constant | affine:a0,.. | dirichlet:a0,..")
    p.add_argument("--schemes", default="linear,quadratic")
    p.add_argument("--mesh", default="uniform", choices=["uniform", "quasi"])
    p.add_argument("--delta", type=float, default=mesh_config.delta, help="准均匀网格相对扰动")
    p.add_argument("--seed", type=int, default=mesh_config.seed)
    p.add_argument("--basis-mode", default="canonical", choices=[m.value for m in BasisMode])
    p.add_argument("--output", "-o", default=None)

    p = sub.add_parser("beta-curve", help="对称 Dirichlet 的 β(α), 输出 CSV")
    p.add_argument("--alphas", default="2:0.5:5", help="'2,2.5,3' 或 'start:step:stop'")
    p.add_argument("--alpha-reg", type=float, default=None, help="谱平移 α_reg, 缺省取 HISTO_ALPHA_REG")
    p.add_argument("--basis-mode", default="raw", choices=[m.value for m in BasisMode])
    p.add_argument("--output", "-o", default=None)

    p = sub.add_parser("optimize", help="参数优化 p = (α, θ, υ), 输出 JSON")
    p.add_argument("--alpha", default="3", help="初始 α, 单个值表示对称")
    p.add_argument("--mode", default="max_beta", choices=[m.value for m in ObjectiveMode])
    p.add_argument("--budget", type=int, default=optimizer_config.budget, help="目标函数评估次数上限")
    p.add_argument("--basis-mode", default=optimizer_config.basis_mode, choices=[m.value for m in BasisMode])
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--output", "-o", default=None)

    p = sub.add_parser("unisolvence", help="单个单纯形的可解性与稳定性, 输出 JSON")
    p.add_argument("--weight", default="dirichlet:1,1,1,1")
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--vertices", default=None, help="'x,y,z;x,y,z;...', 缺省为参考单纯形")
    p.add_argument("--basis-mode", default="canonical", choices=[m.value for m in BasisMode])
    p.add_argument("--debug-duplicate-psi", action="store_true", help="调试: 用 ψ_0 替换全部 ρ_k")
    p.add_argument("--output", "-o", default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = build_run_config(args)
        return COMMANDS[cfg.command](cfg)
    except ConfigError as e:
        print(f"❌ 参数错误: {e.message}", file=sys.stderr)
        return e.code
    except HistopolationError as e:
        logger.error("%s 失败: %s", args.command, e.message)
        print(f"❌ 数值失败: {e.message}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
