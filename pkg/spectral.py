"""
谱分析模块
Laplacian 的对称特征分解、图傅里叶变换（GFT）及频域工具
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from errors import DimensionMismatch, NotPSD, NotSymmetric
from graph_core import Graph, LaplacianKind, laplacian

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8  # 相对 ‖m‖ 的负特征值容忍度，同时是钳位到 0 的阈值


@dataclass(frozen=True)
class Spectrum:
    """升序特征值 + 正交特征向量（第 n 列对应第 n 个特征值）"""
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def __post_init__(self):
        for name in ("eigenvalues", "eigenvectors"):
            arr = np.array(getattr(self, name), dtype=float, copy=True)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def size(self) -> int:
        return self.eigenvalues.shape[0]

    def band(self, band) -> np.ndarray:
        """频带 ℱ（0 起始索引）对应的特征向量列 U_ℱ"""
        idx = np.asarray(list(band), dtype=int)
        if idx.size and (idx.min() < 0 or idx.max() >= self.size):
            raise DimensionMismatch(f"频带索引超出 [0, {self.size}): {idx.min()}..{idx.max()}")
        return self.eigenvectors[:, idx]

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def _fix_signs(u: np.ndarray) -> np.ndarray:
    """每列绝对值最大的元素取正（并列时取最小索引）"""
    mags = np.abs(u)
    # 浮点意义下的并列也算并列
    pivots = np.argmax(mags >= mags.max(axis=0, initial=0.0) - 1e-12, axis=0)
    signs = np.sign(u[pivots, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs


def eigendecompose(m: np.ndarray) -> Spectrum:
    """
    对称半正定矩阵的特征分解

    Args:
        m: N×N 对称半正定矩阵（通常为 Laplacian）

    Returns:
        Spectrum，特征值升序，[-1e-8‖m‖, 0) 内的值钳位为 0
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"需要方阵，实际形状 {m.shape}")

    scale = max(np.linalg.norm(m, 2), 1.0) if m.size else 1.0
    if np.max(np.abs(m - m.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise NotSymmetric("矩阵不对称")

    evals, evecs = scipy.linalg.eigh(0.5 * (m + m.T))
    if evals.size and evals[0] < -PSD_TOL * scale:
        raise NotPSD(f"最小特征值 {evals[0]:.3e} 为负，矩阵非半正定")

    evals = np.where(evals < 0, 0.0, evals)
    return Spectrum(evals, _fix_signs(evecs))


def graph_spectrum(g: Graph, kind: LaplacianKind = LaplacianKind.COMBINATORIAL) -> Spectrum:
    return eigendecompose(laplacian(g, kind))


def _check_dim(spec: Spectrum, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (spec.size,):
        raise DimensionMismatch(f"信号长度 {f.shape} 与谱维度 {spec.size} 不一致")
    return f


def gft(spec: Spectrum, f: np.ndarray) -> np.ndarray:
    """图傅里叶变换 f̃ = Uᵀ f"""
    return spec.eigenvectors.T @ _check_dim(spec, f)


def igft(spec: Spectrum, f_tilde: np.ndarray) -> np.ndarray:
    """逆变换 f = U f̃"""
    return spec.eigenvectors @ _check_dim(spec, f_tilde)


def smoothness(g: Graph, f: np.ndarray) -> float:
    """光滑度 ∂f = fᵀ L f（组合 Laplacian）"""
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n_vertices,):
        raise DimensionMismatch(f"信号长度 {f.shape} 与顶点数 {g.n_vertices} 不一致")
    return float(f @ laplacian(g) @ f)


def spectral_projector(spec: Spectrum, eigenvalue: float, tol: float = 1e-9) -> np.ndarray:
    """特征值 eigenvalue 对应特征空间的正交投影（与特征空间内基的选择无关）"""
    cols = np.abs(spec.eigenvalues - eigenvalue) <= tol * max(1.0, abs(eigenvalue))
    u = spec.eigenvectors[:, cols]
    return u @ u.T
