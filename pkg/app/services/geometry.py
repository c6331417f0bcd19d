# -*- coding: utf-8 -*-
"""
单纯形几何服务

职责:
- 非退化 d-单纯形 (顶点坐标) 与其面 F_j
- 重心坐标 λ_0..λ_d
- 体积 |S_d| / 面积 |F_j| (Gram 行列式)
- 两个单纯形之间的仿射映射 Φ(v̂_i) = v_i

不负责:
- 多项式与积分 (见 barypoly / moments)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from app.core.exceptions import GeometryError

DEGENERACY_REL_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class AffineMap:
    """x ↦ matrix @ x + offset"""
    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        scale = max(float(np.max(np.abs(m))), np.finfo(float).tiny) if m.size else 1.0
        if m.size and abs(np.linalg.det(m)) <= 1e-12 * scale ** m.shape[0]:
            raise GeometryError("仿射映射不可逆")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x @ np.asarray(self.matrix).T + np.asarray(self.offset)

    def inverse(self) -> "AffineMap":
        inv = np.linalg.inv(self.matrix)
        return AffineMap(matrix=inv, offset=-inv @ np.asarray(self.offset))


@dataclass(frozen=True, eq=False)
class Simplex:
    """
    d-单纯形, vertices 形状 (k+1, d)。

    k = d 时为满维单纯形; k = d-1 时为嵌入 R^d 的面 (face() 的返回值)。
    """
    vertices: np.ndarray
    check: bool = True

    def __post_init__(self) -> None:
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[0] > v.shape[1] + 1:
            raise GeometryError(f"顶点数组形状非法: {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        if self.check and self.dim > 0:
            max_edge = self.diameter
            if max_edge == 0.0 or self.volume <= DEGENERACY_REL_TOL * max_edge ** self.dim:
                raise GeometryError(f"退化单纯形: volume={self.volume:.3e}")

    @property
    def dim(self) -> int:
        return self.vertices.shape[0] - 1

    @property
    def ambient_dim(self) -> int:
        return self.vertices.shape[1]

    def _edges(self) -> np.ndarray:
        return self.vertices[1:] - self.vertices[0]

    @cached_property
    def volume(self) -> float:
        """|det[v_i - v_0]| / d!; 嵌入情形用 Gram 行列式。"""
        if self.dim == 0:
            return 1.0
        e = self._edges()
        if self.dim == self.ambient_dim:
            det = abs(float(np.linalg.det(e)))
        else:
            det = math.sqrt(max(float(np.linalg.det(e @ e.T)), 0.0))
        return det / math.factorial(self.dim)

    @cached_property
    def diameter(self) -> float:
        diffs = self.vertices[:, None, :] - self.vertices[None, :, :]
        return float(np.max(np.linalg.norm(diffs, axis=-1)))

    @cached_property
    def _bary_system(self) -> np.ndarray:
        if self.dim != self.ambient_dim:
            raise GeometryError("重心坐标只对满维单纯形定义")
        m = np.vstack([self.vertices.T, np.ones(self.dim + 1)])
        return np.linalg.inv(m)

    def barycentric(self, x: np.ndarray) -> np.ndarray:
        """x 形状 (d,) 或 (n, d), 返回 (d+1,) 或 (n, d+1)。"""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        rhs = np.hstack([pts, np.ones((pts.shape[0], 1))])
        lam = rhs @ self._bary_system.T
        return lam[0] if single else lam

    def point(self, lam: np.ndarray) -> np.ndarray:
        """重心坐标 -> 笛卡尔坐标"""
        return np.asarray(lam, dtype=float) @ self.vertices

    def face(self, j: int) -> "Simplex":
        if not 0 <= j <= self.dim:
            raise GeometryError(f"面索引越界: j={j}, d={self.dim}")
        keep = [i for i in range(self.dim + 1) if i != j]
        return Simplex(self.vertices[keep], check=False)

    @property
    def centroid(self) -> np.ndarray:
        return self.vertices.mean(axis=0)

    def inradius(self) -> float:
        if self.dim != 3:
            raise GeometryError("inradius 仅用于四面体")
        area = sum(self.face(j).volume for j in range(4))
        return 3.0 * self.volume / area


# ============================================================
# 对外函数接口
# ============================================================

def barycentric_coords(s: Simplex, x: np.ndarray) -> np.ndarray:
    return s.barycentric(x)


def volume(s: Simplex) -> float:
    return s.volume


def face(s: Simplex, j: int) -> Simplex:
    return s.face(j)


def affine_map_between(src: Simplex, dst: Simplex) -> AffineMap:
    """Φ(src.v_i) = dst.v_i, 重心坐标在映射下保持不变。"""
    if src.dim != dst.dim or src.ambient_dim != dst.ambient_dim or src.dim != src.ambient_dim:
        raise GeometryError("仿射映射需要同维满维单纯形")
    es = src.vertices[1:] - src.vertices[0]
    ed = dst.vertices[1:] - dst.vertices[0]
    # ed.T = B @ es.T
    matrix = np.linalg.solve(es, ed).T
    offset = dst.vertices[0] - matrix @ src.vertices[0]
    return AffineMap(matrix=matrix, offset=offset)


def reference_simplex(d: int) -> Simplex:
    """v_0 = 0, v_i = e_i"""
    if d < 1:
        raise GeometryError(f"维数必须 >= 1: {d}")
    return Simplex(np.vstack([np.zeros(d), np.eye(d)]))


def random_simplex(d: int, rng: Optional[np.random.Generator] = None, min_quality: float = 0.05) -> Simplex:
    """随机非退化单纯形 (测试与 unisolvence 扫描用)。"""
    rng = rng or np.random.default_rng()
    ref = reference_simplex(d)
    while True:
        verts = rng.uniform(-1.0, 1.0, size=(d + 1, d))
        try:
            s = Simplex(verts)
        except GeometryError:
            continue
        if s.volume >= min_quality * s.diameter ** d * ref.volume:
            return s
