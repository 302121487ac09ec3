"""
核矩阵模块
构建各类图核：Laplacian 谱核、带限核、协方差核、邻接/高通闭式核、环形图闭式核、
迹归一化，以及大规模场景下的逆核表示（分段谱函数 / 多项式）
"""

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from errors import (
    ConstraintViolation,
    DimensionMismatch,
    EmptyBand,
    NegativeSpectralValue,
    NotPositiveDefinite,
    NotPSD,
    NotSymmetric,
    SingularMatrix,
    ZeroSpectralValue,
    ZeroTrace,
)
from graph_core import Graph
from spectral import Spectrum

SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-8
PINV_RTOL = 1e-12     # 核权重 r† 低于 1e-12·max r† 视为 0
ROOT_RTOL = 1e-10     # 矩阵平方根 / 伪逆平方根的相对阈值
SINGULAR_COND = 1e12


# ===== 谱函数 r(λ) =====

@dataclass(frozen=True)
class Diffusion:
    """扩散核 r(λ) = exp(σ²λ/2)"""
    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"σ² 必须为正: {self.sigma2}")

    def evaluate(self, eigenvalues: np.ndarray) -> np.ndarray:
        return np.exp(0.5 * self.sigma2 * np.asarray(eigenvalues, dtype=float))

    def log_evaluate(self, eigenvalues: np.ndarray) -> np.ndarray:
        """log r(λ)；σ²λ 很大时 exp 会溢出"""
        return 0.5 * self.sigma2 * np.asarray(eigenvalues, dtype=float)

    @property
    def label(self) -> str:
        return f"diffusion(sigma2={self.sigma2!r})"


@dataclass(frozen=True)
class PStepRandomWalk:
    """p 步随机游走核 r(λ) = (a - λ)^{-p}"""
    a: float
    p: int

    def __post_init__(self):
        if self.a < 2:
            raise ValueError(f"a 必须 ≥ 2: {self.a}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p 必须为正整数: {self.p}")

    def evaluate(self, eigenvalues: np.ndarray) -> np.ndarray:
        lam = np.asarray(eigenvalues, dtype=float)
        gap = self.a - lam
        if np.any(gap == 0) or (self.p % 2 == 1 and np.any(gap < 0)):
            raise NegativeSpectralValue(
                f"p 步随机游走核在 λ ≥ a 处无定义或为负: a={self.a}, λ_max={lam.max():.6g}")
        return gap ** (-float(self.p))

    @property
    def label(self) -> str:
        return f"pstep(a={self.a!r},p={self.p})"


@dataclass(frozen=True)
class LaplacianRegularization:
    """正则化 Laplacian 核 r(λ) = 1 + σ²λ"""
    sigma2: float

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError(f"σ² 必须为正: {self.sigma2}")

    def evaluate(self, eigenvalues: np.ndarray) -> np.ndarray:
        return 1.0 + self.sigma2 * np.asarray(eigenvalues, dtype=float)

    @property
    def label(self) -> str:
        return f"laplacian_reg(sigma2={self.sigma2!r})"


@dataclass(frozen=True)
class Bandlimited:
    """带限谱函数：频带 ℱ 内 r = 1/β，带外 r = β（按特征值位置索引，0 起始）"""
    band: tuple
    beta: float

    def __post_init__(self):
        band = tuple(sorted({int(n) for n in self.band}))
        if not band:
            raise EmptyBand("频带 ℱ 不能为空")
        if self.beta <= 0:
            raise ValueError(f"β 必须为正: {self.beta}")
        object.__setattr__(self, "band", band)

    def evaluate(self, eigenvalues: np.ndarray) -> np.ndarray:
        n = np.asarray(eigenvalues).shape[0]
        if self.band[0] < 0 or self.band[-1] >= n:
            raise DimensionMismatch(f"频带索引超出 [0, {n})")
        r = np.full(n, float(self.beta))
        r[list(self.band)] = 1.0 / self.beta
        return r

    @property
    def label(self) -> str:
        return f"bandlimited(B={len(self.band)},beta={self.beta!r})"


@dataclass(frozen=True)
class Table:
    """逐频率给定的 r 值表（长度 N，非负）"""
    values: tuple
    note: str = ""

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        if any(v < 0 for v in values):
            raise NegativeSpectralValue("Table 谱函数的值必须非负")
        object.__setattr__(self, "values", values)

    def evaluate(self, eigenvalues: np.ndarray) -> np.ndarray:
        n = np.asarray(eigenvalues).shape[0]
        if len(self.values) != n:
            raise DimensionMismatch(f"Table 长度 {len(self.values)} 与谱维度 {n} 不一致")
        return np.array(self.values)

    @property
    def label(self) -> str:
        return f"table({self.note})" if self.note else "table"


SpectralFunction = Union[Diffusion, PStepRandomWalk, LaplacianRegularization, Bandlimited, Table]

# 只依赖 λ 数值（而非特征值位置）的谱函数
SPECTRAL_MAPS = (Diffusion, PStepRandomWalk, LaplacianRegularization)


def pseudo_reciprocal(r: np.ndarray) -> np.ndarray:
    """
    r† = 1/r（r > 0），再把低于 1e-12·max r† 的权重置 0

    截断作用在核的特征值 r† 上：r = 0 的频率被滤除，
    而 r 很大（扩散核的高频）只会使对应核特征值可忽略
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise NegativeSpectralValue(f"谱函数出现负值: min r = {r.min():.3e}")
    out = np.zeros_like(r)
    positive = r > 0
    out[positive] = 1.0 / r[positive]
    out[out < PINV_RTOL * out.max(initial=0.0)] = 0.0
    return out


def spectral_weights(r: SpectralFunction, eigenvalues: np.ndarray, epsilon: float = 0.0) -> np.ndarray:
    """
    r†(λ_n)，阈值同 pseudo_reciprocal

    提供 log_evaluate 的谱函数（扩散核）在对数域计算，避免 exp 溢出
    """
    if epsilon == 0 and hasattr(r, "log_evaluate"):
        log_r = r.log_evaluate(eigenvalues)
        keep = log_r < log_r.min() - np.log(PINV_RTOL)
        out = np.zeros_like(log_r)
        out[keep] = np.exp(-log_r[keep])
        return out
    return pseudo_reciprocal(np.asarray(r.evaluate(eigenvalues), dtype=float) + epsilon)


# ===== 核矩阵 =====

@dataclass(frozen=True)
class KernelMatrix:
    """
    N×N 对称半正定核矩阵

    spectrum/spectral_weights 仅对 Laplacian 核存在：K = U diag(spectral_weights) Uᵀ
    """
    matrix: np.ndarray
    provenance: str = ""
    spectrum: Optional[Spectrum] = field(default=None, repr=False, compare=False)
    spectral_weights: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        k = np.array(self.matrix, dtype=float, copy=True)
        if k.ndim != 2 or k.shape[0] != k.shape[1]:
            raise DimensionMismatch(f"核矩阵必须为方阵: {k.shape}")
        k.flags.writeable = False
        object.__setattr__(self, "matrix", k)
        if self.spectral_weights is not None:
            w = np.array(self.spectral_weights, dtype=float, copy=True)
            w.flags.writeable = False
            object.__setattr__(self, "spectral_weights", w)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def restricted(self, indices) -> np.ndarray:
        """K̄ = Ψ K Ψᵀ"""
        idx = np.asarray(indices, dtype=int)
        return self.matrix[np.ix_(idx, idx)]


def check_kernel(matrix: np.ndarray) -> np.ndarray:
    """校验对称半正定，返回对称化后的矩阵"""
    k = np.asarray(matrix, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise DimensionMismatch(f"核矩阵必须为方阵: {k.shape}")
    scale = max(np.linalg.norm(k, 2), 1.0)
    if np.max(np.abs(k - k.T), initial=0.0) > SYMMETRY_TOL * scale:
        raise NotSymmetric("核矩阵不对称")
    k = 0.5 * (k + k.T)
    lowest = scipy.linalg.eigvalsh(k)[0] if k.size else 0.0
    if lowest < -PSD_TOL * scale:
        raise NotPSD(f"核矩阵非半正定，最小特征值 {lowest:.3e}")
    return k


def _from_spectral_weights(spec: Spectrum, weights: np.ndarray, provenance: str) -> KernelMatrix:
    u = spec.eigenvectors
    k = (u * weights) @ u.T
    return KernelMatrix(0.5 * (k + k.T), provenance, spectrum=spec, spectral_weights=weights)


def laplacian_kernel(spec: Spectrum, r: SpectralFunction, epsilon: float = 0.0) -> KernelMatrix:
    """
    Laplacian 核 K = U r†(Λ) Uᵀ

    Args:
        spec: Laplacian 的谱
        r: 谱函数
        epsilon: 可选的 K† + εI 修正，即对 r(λ) + ε 取伪逆

    Returns:
        KernelMatrix（携带谱权重，供快速路径使用）
    """
    weights = spectral_weights(r, spec.eigenvalues, epsilon)
    tag = r.label if epsilon == 0 else f"{r.label}+eps={epsilon!r}"
    return _from_spectral_weights(spec, weights, f"laplacian:{tag}")


def bandlimited_kernel(spec: Spectrum, band: Iterable[int], beta: float) -> KernelMatrix:
    """带限核：ℱ 内 r† = β，带外 r† = 1/β"""
    r = Bandlimited(tuple(band), beta)
    weights = 1.0 / r.evaluate(spec.eigenvalues)
    return _from_spectral_weights(spec, weights, f"laplacian:{r.label}")


def covariance_kernel(c: np.ndarray) -> KernelMatrix:
    """协方差核：K = C"""
    return KernelMatrix(check_kernel(c), "covariance")


def adjacency_kernel(g: Union[Graph, np.ndarray]) -> KernelMatrix:
    """
    K = [(I - W)ᵀ(I - W)]^{-1}

    W 须由调用方预先缩放使 I - W 可逆，这里只校验可逆性
    """
    w = g.weights if isinstance(g, Graph) else np.asarray(g, dtype=float)
    m = np.eye(w.shape[0]) - w
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        raise SingularMatrix(f"I - W 奇异（条件数 {cond:.3e}），请先缩放 W")
    m_inv = scipy.linalg.inv(m)
    k = m_inv @ m_inv.T
    return KernelMatrix(0.5 * (k + k.T), "adjacency")


def highpass_kernel(h: np.ndarray, epsilon: float) -> KernelMatrix:
    """K = [HᵀH + εI]^{-1}"""
    if epsilon <= 0:
        raise ValueError(f"ε 必须为正: {epsilon}")
    h = np.asarray(h, dtype=float)
    gram = h.T @ h + epsilon * np.eye(h.shape[1])
    k = scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram), np.eye(h.shape[1]))
    return KernelMatrix(0.5 * (k + k.T), f"highpass(eps={epsilon!r})")


def ring_eigenvalues(n_vertices: int) -> np.ndarray:
    """环形图 Laplacian 按 DFT 顺序排列的特征值 2[1 - cos(2πn/N)]"""
    n = np.arange(n_vertices)
    return 2.0 * (1.0 - np.cos(2.0 * np.pi * n / n_vertices))


def circulant_kernel(n_vertices: int, r: SpectralFunction) -> KernelMatrix:
    """
    环形图 Laplacian 核的闭式：(K)_{l,l'} = k_{l-l'}，k = IDFT{1 / r(2[1-cos(2πn/N)])}

    Args:
        n_vertices: 环的顶点数
        r: 仅依赖 λ 的谱函数（Diffusion / PStepRandomWalk / LaplacianRegularization）
    """
    if not isinstance(r, SPECTRAL_MAPS):
        raise TypeError(f"环形闭式只支持依赖 λ 数值的谱函数，得到 {type(r).__name__}")
    values = r.evaluate(ring_eigenvalues(n_vertices))
    if np.any(values < 0):
        raise NegativeSpectralValue("环形图谱上 r 出现负值")
    if np.any(values == 0):
        raise ZeroSpectralValue("环形闭式要求 r 在环形图谱上严格为正")

    k = np.fft.ifft(1.0 / values).real
    idx = np.arange(n_vertices)
    mat = k[(idx[:, None] - idx[None, :]) % n_vertices]
    return KernelMatrix(0.5 * (mat + mat.T), f"circulant:{r.label}")


def normalize_trace(k: KernelMatrix, target: float = 1.0) -> KernelMatrix:
    """
    τ·K / tr(K)，使迹为 τ（默认 1）

    Args:
        k: 核矩阵
        target: 目标迹 τ > 0
    """
    if not target > 0:
        raise ValueError(f"目标迹必须为正: {target}")
    tr = k.trace
    if not tr > 0:
        raise ZeroTrace(f"核矩阵迹必须为正: {tr}")
    factor = target / tr
    weights = None if k.spectral_weights is None else k.spectral_weights * factor
    head, sep, _ = k.provenance.rpartition("|trace")
    base = head if sep else k.provenance
    tag = "|trace1" if target == 1.0 else f"|trace{target:g}"
    return KernelMatrix(k.matrix * factor, base + tag, spectrum=k.spectrum, spectral_weights=weights)


# ===== 对称平方根 =====

def _symmetric_eigh(k: np.ndarray):
    k = np.asarray(k, dtype=float)
    evals, evecs = scipy.linalg.eigh(0.5 * (k + k.T))
    top = max(evals.max(initial=0.0), 0.0)
    if evals.size and evals[0] < -ROOT_RTOL * max(top, 1.0):
        raise NotPSD(f"矩阵平方根要求半正定，最小特征值 {evals[0]:.3e}")
    return np.clip(evals, 0.0, None), evecs, top


def kernel_sqrt(k: np.ndarray) -> np.ndarray:
    """对称半正定平方根 K^{1/2}"""
    evals, evecs, _ = _symmetric_eigh(k)
    return (evecs * np.sqrt(evals)) @ evecs.T


def kernel_pinv_sqrt(k: np.ndarray) -> np.ndarray:
    """伪逆平方根 (K^{1/2})†，相对阈值 1e-10"""
    evals, evecs, top = _symmetric_eigh(k)
    inv = np.zeros_like(evals)
    keep = evals > ROOT_RTOL * top
    inv[keep] = 1.0 / np.sqrt(evals[keep])
    return (evecs * inv) @ evecs.T


# ===== 逆核表示 =====

@dataclass(frozen=True)
class InverseKernel:
    """K^{-1}（或 K† + εI）的显式表示，对称正定"""
    inv_matrix: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        m = np.array(self.inv_matrix, dtype=float, copy=True)
        m.flags.writeable = False
        object.__setattr__(self, "inv_matrix", m)

    @property
    def size(self) -> int:
        return self.inv_matrix.shape[0]


def _require_pd(m: np.ndarray, error_cls, what: str) -> np.ndarray:
    m = 0.5 * (m + m.T)
    lowest = scipy.linalg.eigvalsh(m)[0]
    if not lowest > 0:
        raise error_cls(f"{what} 非正定，最小特征值 {lowest:.3e}")
    return m


def inverse_kernel_piecewise(spec: Spectrum, band_size: int, d: float, d_tail: Sequence[float],
                             d1: float, epsilon: float) -> InverseKernel:
    """
    分段谱函数对应的逆核

    K^{-1} = dL + Ū(Δ - dΛ̄)Ūᵀ + d₁𝟙𝟙ᵀ + εI，Ū 为最大的 N-B 个特征值对应的特征向量

    Args:
        spec: Laplacian 的谱
        band_size: B（1 ≤ B ≤ N；B = N 时尾部为空）
        d: 带内斜率，d > 0
        d_tail: d_{B+1..N}，长度 N-B，要求 d_n > -λ_n
        d1: 常数方向权重，d₁ > 0
        epsilon: ε > 0
    """
    n = spec.size
    d_tail = np.asarray(d_tail, dtype=float).reshape(-1)
    if not 1 <= band_size <= n:
        raise ConstraintViolation(f"B 必须在 [1, {n}] 内: {band_size}")
    if d <= 0 or d1 <= 0 or epsilon <= 0:
        raise ConstraintViolation(f"要求 d, d₁, ε > 0: d={d}, d1={d1}, eps={epsilon}")
    if d_tail.shape[0] != n - band_size:
        raise ConstraintViolation(f"d_tail 长度应为 N-B = {n - band_size}，实际 {d_tail.shape[0]}")

    lam_tail = spec.eigenvalues[band_size:]
    if np.any(d_tail <= -lam_tail):
        raise ConstraintViolation("要求 d_n > -λ_n")

    lap = spec.reconstruct()
    u_tail = spec.eigenvectors[:, band_size:]
    ones = np.ones(n)
    inv = (d * lap
           + (u_tail * (d_tail - d * lam_tail)) @ u_tail.T
           + d1 * np.outer(ones, ones)
           + epsilon * np.eye(n))
    inv = _require_pd(inv, ConstraintViolation, "分段逆核")
    return InverseKernel(inv, f"piecewise(B={band_size},d={d!r},d1={d1!r},eps={epsilon!r})")


def inverse_kernel_polynomial(l: np.ndarray, coeffs: Sequence[float]) -> InverseKernel:
    """
    多项式谱函数对应的逆核 K^{-1} = a₀I + Σ_{p≥1} a_p L^p（逐次乘法，不做特征分解）
    """
    l = np.asarray(l, dtype=float)
    coeffs = [float(a) for a in coeffs]
    if not coeffs:
        raise ValueError("多项式系数不能为空")

    n = l.shape[0]
    inv = coeffs[0] * np.eye(n)
    power = np.eye(n)
    for a in coeffs[1:]:
        power = power @ l
        if a != 0:
            inv = inv + a * power

    inv = _require_pd(inv, NotPositiveDefinite, "多项式逆核")
    return InverseKernel(inv, f"polynomial({','.join(repr(a) for a in coeffs)})")
