# -*- coding: utf-8 -*-
"""
单位立方体四面体网格

职责:
- 均匀网格: n³ 个格点, 每个 Cartesian 单元按 Kuhn (置换) 剖分为 6 个全等四面体
- 准均匀网格: 内部格点随机扰动, 连接关系不变, 边界点固定
- 诊断: 协调性 (排序面哈希), 形状正则性 (内切球半径 / 直径), 纯文本导入导出

不负责:
- Delaunay 重剖分, 一般区域, 自适应
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np
from scipy.spatial import cKDTree

from app.core.config import MeshConfig, mesh_config
from app.core.exceptions import ConfigError, MeshError, MeshInversionError
from app.services.geometry import Simplex
from app.utils.locking import AtomicFileWriter
from app.utils.retry import create_retry_decorator

logger = logging.getLogger(__name__)

MAX_DELTA = 0.25


class MeshKind(Enum):
    UNIFORM = "uniform"
    QUASI = "quasi"

    @classmethod
    def parse(cls, text: str) -> "MeshKind":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigError(f"未知网格类型: {text!r} (可选 uniform/quasi)")


@dataclass(frozen=True, eq=False)
class TetMesh:
    vertices: np.ndarray   # (N, 3)
    tets: np.ndarray       # (K, 4), 0-based
    h: float

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.tets.shape[0]

    def element_vertices(self) -> np.ndarray:
        """(K, 4, 3)"""
        return self.vertices[self.tets]

    def element(self, k: int) -> Simplex:
        return Simplex(self.vertices[self.tets[k]])

    def __iter__(self):
        for k in range(self.n_elements):
            yield self.element(k)

    def signed_volumes(self) -> np.ndarray:
        return signed_volumes(self.element_vertices())

    def total_volume(self) -> float:
        return float(np.sum(np.abs(self.signed_volumes())))

    def diameters(self) -> np.ndarray:
        return _diameters(self.element_vertices())

    def has_duplicate_vertices(self, tol: float = 1e-12) -> bool:
        return bool(cKDTree(self.vertices).query_pairs(tol))


def signed_volumes(ev: np.ndarray) -> np.ndarray:
    edges = ev[:, 1:, :] - ev[:, :1, :]
    return np.linalg.det(edges) / 6.0


def _diameters(ev: np.ndarray) -> np.ndarray:
    diffs = ev[:, :, None, :] - ev[:, None, :, :]
    return np.linalg.norm(diffs, axis=-1).reshape(ev.shape[0], -1).max(axis=1)


# ============================================================
# 均匀网格
# ============================================================

def _kuhn_cell_tets() -> np.ndarray:
    """单位格子内 6 个四面体的角点偏移 (6, 4, 3), 全部正向。"""
    out = []
    for perm in itertools.permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [corner.copy()]
        for axis in perm:
            corner[axis] += 1
            path.append(corner.copy())
        # 奇置换交换 v2, v3 使有向体积为正
        inversions = sum(1 for a, b in itertools.combinations(perm, 2) if a > b)
        if inversions % 2:
            path[2], path[3] = path[3], path[2]
        out.append(path)
    return np.array(out)


def uniform_mesh(n: int) -> TetMesh:
    """6(n-1)³ 个四面体, h = √3/(n-1)"""
    if n < 2:
        raise ConfigError(f"网格层数 n 必须 >= 2: {n}")
    idx = np.arange(n)
    k, j, i = np.meshgrid(idx, idx, idx, indexing="ij")
    vertices = np.stack([i.ravel(), j.ravel(), k.ravel()], axis=1) / (n - 1)

    cells = np.array(list(itertools.product(range(n - 1), repeat=3)))[:, ::-1]  # (ci, cj, ck)
    offsets = _kuhn_cell_tets()
    corners = cells[:, None, None, :] + offsets[None, :, :, :]
    tets = corners[..., 0] + n * corners[..., 1] + n * n * corners[..., 2]
    tets = tets.reshape(-1, 4)

    mesh = TetMesh(vertices=vertices, tets=tets, h=float(_diameters(vertices[tets]).max()))
    logger.debug("uniform mesh n=%d: %d vertices, %d tets, h=%.6f", n, mesh.n_vertices, mesh.n_elements, mesh.h)
    return mesh


# ============================================================
# 准均匀网格
# ============================================================

def _interior_mask(vertices: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    return np.all((vertices > tol) & (vertices < 1.0 - tol), axis=1)


def _perturb_once(base: TetMesh, n: int, delta: float, rng: np.random.Generator) -> TetMesh:
    mask = _interior_mask(base.vertices)
    m = int(mask.sum())
    direction = rng.standard_normal((m, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = delta / (n - 1) * rng.uniform(0.0, 1.0, size=m) ** (1.0 / 3.0)
    vertices = base.vertices.copy()
    vertices[mask] += direction * radius[:, None]

    ev = vertices[base.tets]
    vols = signed_volumes(ev)
    if np.any(vols <= 0.0):
        raise MeshInversionError(f"{int(np.sum(vols <= 0.0))} 个单元反转 (δ={delta:g})")
    return TetMesh(vertices=vertices, tets=base.tets, h=float(_diameters(ev).max()))


def quasi_uniform_mesh(
    n: int,
    delta: Optional[float] = None,
    seed: Optional[int] = None,
    config: Optional[MeshConfig] = None,
) -> TetMesh:
    """
    内部格点位移为球内均匀随机向量, 半径 <= δ/(n-1)。

    出现反转时在同一 δ 下重采样 (max_resample 次), 仍失败则 δ 缩小后重来;
    缩小 max_shrink 次后仍失败抛 MeshError。给定 seed 时结果确定。
    """
    cfg = config or mesh_config
    delta = cfg.delta if delta is None else float(delta)
    seed = cfg.seed if seed is None else seed
    if not 0.0 <= delta <= MAX_DELTA:
        raise ConfigError(f"δ 必须在 [0, {MAX_DELTA}] 内: {delta}")
    base = uniform_mesh(n)
    if delta == 0.0 or n < 3:
        return base

    rng = np.random.default_rng(seed)
    sample = create_retry_decorator(max_attempts=cfg.max_resample)(_perturb_once)
    current = delta
    for _ in range(cfg.max_shrink + 1):
        try:
            return sample(base, n, current, rng)
        except MeshInversionError as e:
            logger.warning("准均匀网格重采样失败 (δ=%g): %s, 缩小 δ", current, e)
            current *= cfg.shrink_factor
    raise MeshError(f"准均匀网格无法消除反转单元 (n={n}, δ={delta:g})")


def build_mesh(
    kind: MeshKind,
    n: int,
    delta: Optional[float] = None,
    seed: Optional[int] = None,
) -> TetMesh:
    if isinstance(kind, str):
        kind = MeshKind.parse(kind)
    if kind is MeshKind.UNIFORM:
        return uniform_mesh(n)
    return quasi_uniform_mesh(n, delta, seed)


# ============================================================
# 诊断
# ============================================================

def conformity(mesh: TetMesh) -> Dict[str, object]:
    """内部面恰好被两个单元共享, 只出现一次的面必须在立方体边界上。"""
    faces = Counter()
    for tet in mesh.tets:
        for drop in range(4):
            faces[tuple(sorted(int(v) for i, v in enumerate(tet) if i != drop))] += 1
    interior = sum(1 for c in faces.values() if c == 2)
    over = sum(1 for c in faces.values() if c > 2)
    boundary = [f for f, c in faces.items() if c == 1]
    off_boundary = 0
    for f in boundary:
        pts = mesh.vertices[list(f)]
        on_plane = np.any(np.all(np.isclose(pts, 0.0), axis=0) | np.all(np.isclose(pts, 1.0), axis=0))
        if not on_plane:
            off_boundary += 1
    return {
        "interior_faces": interior,
        "boundary_faces": len(boundary),
        "ok": over == 0 and off_boundary == 0,
    }


def shape_regularity(mesh: TetMesh) -> np.ndarray:
    """每个单元的 inradius / diameter"""
    ev = mesh.element_vertices()
    vols = np.abs(signed_volumes(ev))
    area = np.zeros(mesh.n_elements)
    for drop in range(4):
        keep = [i for i in range(4) if i != drop]
        tri = ev[:, keep, :]
        area += 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    return 3.0 * vols / area / _diameters(ev)


def dump_mesh(mesh: TetMesh, path: str) -> None:
    """每行一个顶点 (3 个浮点数), 然后每行一个四面体 (4 个 0-based 下标)。"""
    lines = [" ".join(f"{x:.17g}" for x in v) for v in mesh.vertices]
    lines += [" ".join(str(int(i)) for i in t) for t in mesh.tets]
    AtomicFileWriter(path).write_text("\n".join(lines) + "\n")


def load_mesh(path: str) -> TetMesh:
    vertices, tets = [], []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) == 3:
                vertices.append([float(x) for x in parts])
            elif len(parts) == 4:
                tets.append([int(x) for x in parts])
            else:
                raise MeshError(f"{path}:{lineno}: 无法解析的行 {line.strip()!r}")
    if not vertices or not tets:
        raise MeshError(f"{path}: 网格为空")
    v = np.array(vertices)
    t = np.array(tets, dtype=int)
    if t.min() < 0 or t.max() >= v.shape[0]:
        raise MeshError(f"{path}: 顶点下标越界")
    return TetMesh(vertices=v, tets=t, h=float(_diameters(v[t]).max()))
