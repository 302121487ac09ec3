"""
图结构模块
负责无向加权图的构建、校验、Laplacian/度矩阵计算，以及实验所用的标准图生成器
（环形图、链式图、Erdős–Rényi 随机图、边列表文件）
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Tuple, Union

import numpy as np

from errors import (
    DuplicateEdge,
    EdgeListFormatError,
    IndexOutOfRange,
    InvalidWeight,
    SelfLoop,
    TooFewVertices,
    ZeroDegreeVertex,
)


class LaplacianKind(Enum):
    """Laplacian 类型"""
    COMBINATORIAL = "combinatorial"  # L = D - W
    NORMALIZED = "normalized"        # D^{-1/2} L D^{-1/2}


@dataclass(frozen=True)
class Graph:
    """无向加权图（稠密存储，构建后不可变）"""
    n_vertices: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True)
        n = self.n_vertices
        if n < 1:
            raise TooFewVertices(f"顶点数必须为正: {n}")
        if w.shape != (n, n):
            raise IndexOutOfRange(f"权重矩阵形状 {w.shape} 与顶点数 {n} 不一致")
        if not np.all(np.isfinite(w)):
            raise InvalidWeight("权重矩阵包含 NaN 或 Inf")
        if np.any(w < 0):
            raise InvalidWeight("权重必须非负")
        if np.any(np.diag(w) != 0):
            raise SelfLoop("权重矩阵对角线必须为零")
        if not np.array_equal(w, w.T):
            raise InvalidWeight("权重矩阵必须对称")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def edge_count(self) -> int:
        return int(np.count_nonzero(np.triu(self.weights, 1)))

    def degrees(self) -> np.ndarray:
        return self.weights.sum(axis=1)

    def neighbors(self, n: int) -> np.ndarray:
        """顶点 n 的邻居（权重支撑集）"""
        return np.flatnonzero(self.weights[n])

    def is_connected(self) -> bool:
        seen = np.zeros(self.n_vertices, dtype=bool)
        stack = [0]
        seen[0] = True
        while stack:
            v = stack.pop()
            for u in self.neighbors(v):
                if not seen[u]:
                    seen[u] = True
                    stack.append(u)
        return bool(seen.all())


def build_graph(n_vertices: int, edges: Iterable[Tuple[int, int, float]]) -> Graph:
    """
    由边列表构建图

    Args:
        n_vertices: 顶点数 N
        edges: [(i, j, w), ...]，0 起始索引，w > 0

    Returns:
        Graph，weights[i][j] = weights[j][i] = w
    """
    if n_vertices < 1:
        raise TooFewVertices(f"顶点数必须为正: {n_vertices}")

    w = np.zeros((n_vertices, n_vertices))
    seen = set()
    for i, j, weight in edges:
        i, j = int(i), int(j)
        if not (0 <= i < n_vertices and 0 <= j < n_vertices):
            raise IndexOutOfRange(f"边 ({i}, {j}) 超出顶点范围 [0, {n_vertices})")
        if i == j:
            raise SelfLoop(f"不允许自环: ({i}, {i})")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateEdge(f"重复边: {key}")
        weight = float(weight)
        if not np.isfinite(weight) or weight <= 0:
            raise InvalidWeight(f"边 {key} 的权重必须为有限正数: {weight}")
        seen.add(key)
        w[i, j] = w[j, i] = weight

    return Graph(n_vertices, w)


def degree_matrix(g: Graph) -> np.ndarray:
    return np.diag(g.degrees())


def laplacian(g: Graph, kind: LaplacianKind = LaplacianKind.COMBINATORIAL) -> np.ndarray:
    """
    计算 Laplacian 矩阵

    Args:
        g: 图
        kind: COMBINATORIAL 返回 D - W；NORMALIZED 返回 D^{-1/2} (D - W) D^{-1/2}

    Returns:
        N×N 对称半正定矩阵
    """
    deg = g.degrees()
    lap = np.diag(deg) - g.weights

    if kind == LaplacianKind.NORMALIZED:
        zero = np.flatnonzero(deg <= 0)
        if zero.size:
            raise ZeroDegreeVertex(f"归一化 Laplacian 要求所有顶点度 > 0，孤立顶点: {zero.tolist()}")
        d_inv_sqrt = 1.0 / np.sqrt(deg)
        lap = d_inv_sqrt[:, None] * lap * d_inv_sqrt[None, :]
        lap = 0.5 * (lap + lap.T)

    return lap


def circular_graph(n_vertices: int) -> Graph:
    """无权环形图：n 与 (n±1) mod N 相连"""
    if n_vertices < 3:
        raise TooFewVertices(f"环形图至少需要 3 个顶点: {n_vertices}")
    edges = [(n, (n + 1) % n_vertices, 1.0) for n in range(n_vertices)]
    return build_graph(n_vertices, edges)


def path_graph(n_vertices: int) -> Graph:
    """无权链式图 0-1-2-…-(N-1)"""
    if n_vertices < 2:
        raise TooFewVertices(f"链式图至少需要 2 个顶点: {n_vertices}")
    return build_graph(n_vertices, [(n, n + 1, 1.0) for n in range(n_vertices - 1)])


def erdos_renyi(n_vertices: int, edge_probability: float, rng_seed) -> Graph:
    """
    生成 Erdős–Rényi G(N, p) 无权随机图

    Args:
        n_vertices: 顶点数
        edge_probability: 每条无序边独立出现的概率 p ∈ (0, 1)
        rng_seed: 整数种子或 numpy Generator（同一种子结果确定）

    Returns:
        Graph
    """
    if not 0.0 < edge_probability < 1.0:
        raise ValueError(f"边概率必须在 (0, 1) 内: {edge_probability}")
    if n_vertices < 1:
        raise TooFewVertices(f"顶点数必须为正: {n_vertices}")

    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    draws = rng.random((n_vertices, n_vertices))
    upper = np.triu(draws < edge_probability, k=1).astype(float)
    return Graph(n_vertices, upper + upper.T)


# ===== 边列表文本格式 =====

def parse_edge_list(text: str) -> Graph:
    """
    解析边列表文本

    格式：
        # 注释
        N <顶点数>
        <i> <j> <w>      （0 起始索引，空白分隔）

    同一无序边正反各写一次且权重相同视为一条边；权重不同则拒绝。
    """
    n_vertices: Optional[int] = None
    weights: dict = {}   # 无序边 -> 权重
    mirrored: dict = {}  # 无序边 -> 是否已出现反向行
    first_dir: dict = {}

    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()

        if parts[0] == "N":
            if n_vertices is not None:
                raise EdgeListFormatError("重复的 N 头部声明", line_no)
            if len(parts) != 2:
                raise EdgeListFormatError(f"头部格式应为 'N <count>': {raw!r}", line_no)
            try:
                n_vertices = int(parts[1])
            except ValueError:
                raise EdgeListFormatError(f"顶点数不是整数: {parts[1]!r}", line_no)
            continue

        if n_vertices is None:
            raise EdgeListFormatError("边出现在 N 头部声明之前", line_no)
        if len(parts) != 3:
            raise EdgeListFormatError(f"边格式应为 '<i> <j> <w>': {raw!r}", line_no)
        try:
            i, j, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise EdgeListFormatError(f"无法解析的边: {raw!r}", line_no)

        key = (min(i, j), max(i, j))
        if key in weights:
            if first_dir[key] == (i, j) or mirrored[key]:
                raise DuplicateEdge(f"第{line_no}行: 重复的边 {key}")
            if weights[key] != w:
                raise DuplicateEdge(f"第{line_no}行: 非对称的边 {key}: {weights[key]} != {w}")
            mirrored[key] = True
            continue
        weights[key] = w
        mirrored[key] = False
        first_dir[key] = (i, j)

    if n_vertices is None:
        raise EdgeListFormatError("缺少 'N <count>' 头部声明")

    edge_list: List[Tuple[int, int, float]] = [(k[0], k[1], w) for k, w in weights.items()]
    return build_graph(n_vertices, edge_list)


def load_edge_list(path: Union[str, Path]) -> Graph:
    return parse_edge_list(Path(path).read_text(encoding="utf-8"))
