"""
单核重构估计器
核岭回归（S 维约化形式与 N 维完整形式）、逆核原始问题求解、带限最小二乘、
岭平滑器、LMMSE，以及 Markov 随机场局部最优条件的残差检查
"""

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from errors import (
    DimensionMismatch,
    SingularPrecision,
    SingularSystem,
    Unidentifiable,
)
from kernels import InverseKernel, KernelMatrix, kernel_sqrt
from spectral import Spectrum

UNIDENTIFIABLE_COND = 1e12
PINV_RTOL = 1e-12


@dataclass(frozen=True)
class SampleSet:
    """采样顶点（0 起始、严格递增）及其观测值 y"""
    indices: np.ndarray
    observations: np.ndarray

    def __post_init__(self):
        idx = np.array(self.indices, dtype=int, copy=True).reshape(-1)
        y = np.array(self.observations, dtype=float, copy=True).reshape(-1)
        if idx.size < 1:
            raise ValueError("采样集至少需要 1 个顶点")
        if idx.shape != y.shape:
            raise DimensionMismatch(f"采样索引 {idx.shape} 与观测 {y.shape} 长度不一致")
        if idx[0] < 0 or np.any(np.diff(idx) <= 0):
            raise ValueError("采样索引必须非负且严格递增")
        idx.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "observations", y)

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])

    @classmethod
    def from_signal(cls, indices, noisy_full: np.ndarray) -> "SampleSet":
        """从整图带噪信号中取出采样顶点上的观测"""
        idx = np.sort(np.asarray(indices, dtype=int))
        return cls(idx, np.asarray(noisy_full, dtype=float)[idx])

    def check(self, n_vertices: int) -> None:
        if self.indices[-1] >= n_vertices:
            raise DimensionMismatch(f"采样索引 {int(self.indices[-1])} 超出顶点数 {n_vertices}")


@dataclass(frozen=True)
class Estimate:
    """重构结果：整图估计 f̂，表示定理形式下附带系数 α"""
    values: np.ndarray
    coefficients: Optional[np.ndarray] = field(default=None, repr=False)
    method: str = ""


def sampling_matrix(samples: SampleSet, n_vertices: int) -> np.ndarray:
    """显式的 S×N 采样矩阵 Ψ，(Ψ)_{s,n_s} = 1"""
    samples.check(n_vertices)
    psi = np.zeros((samples.size, n_vertices))
    psi[np.arange(samples.size), samples.indices] = 1.0
    return psi


def _solve_psd(a: np.ndarray, b: np.ndarray, fallback: bool = True) -> np.ndarray:
    """对称正定方程组：Cholesky，失败时按 1e-12 相对阈值退化为最小二乘"""
    try:
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(a), b)
    except np.linalg.LinAlgError:
        if not fallback:
            raise SingularSystem("线性系统非正定，无法求解")
    sol, _, rank, _ = scipy.linalg.lstsq(a, b, cond=PINV_RTOL)
    if rank == 0:
        raise SingularSystem("线性系统秩为 0")
    return sol


def _representer_solve(k: np.ndarray, samples: SampleSet, ridge: float,
                       fallback: bool = True) -> Tuple[np.ndarray, np.ndarray]:
    idx = samples.indices
    k_bar = k[np.ix_(idx, idx)]
    alpha = _solve_psd(k_bar + ridge * np.eye(samples.size), samples.observations, fallback)
    return k[:, idx] @ alpha, alpha


def krr(k: KernelMatrix, samples: SampleSet, mu: float) -> Estimate:
    """
    核岭回归（表示定理约化形式）

    α̂ = (K̄ + μS I)^{-1} y，f̂ = K Ψᵀ α̂，其中 K̄ = Ψ K Ψᵀ

    Args:
        k: 核矩阵
        samples: 采样集
        mu: 正则化参数 μ > 0

    Returns:
        Estimate（coefficients 为 α̂）
    """
    if mu <= 0:
        raise ValueError(f"μ 必须为正: {mu}")
    samples.check(k.size)
    values, alpha = _representer_solve(k.matrix, samples, mu * samples.size)
    return Estimate(values, alpha, f"krr[{k.provenance}]")


def krr_full(k: KernelMatrix, samples: SampleSet, mu: float) -> Estimate:
    """
    N 维完整问题的核岭回归，仅作为表示定理的对照解

    min_ᾱ (1/S)‖y - ΨKᾱ‖² + μ ᾱᵀKᾱ，按堆叠最小二乘
    [ΨK/√S; √μ K^{1/2}] ᾱ ≈ [y/√S; 0] 求最小范数解，f̂ = Kᾱ
    """
    if mu <= 0:
        raise ValueError(f"μ 必须为正: {mu}")
    samples.check(k.size)
    n, s = k.size, samples.size
    kmat = k.matrix

    design = np.vstack([kmat[samples.indices, :] / np.sqrt(s), np.sqrt(mu) * kernel_sqrt(kmat)])
    target = np.concatenate([samples.observations / np.sqrt(s), np.zeros(n)])
    alpha_full, _, rank, _ = scipy.linalg.lstsq(design, target)
    if rank == 0:
        raise SingularSystem("完整问题的设计矩阵秩为 0")
    return Estimate(kmat @ alpha_full, alpha_full, f"krr_full[{k.provenance}]")


def primal_estimate(k_inv: InverseKernel, samples: SampleSet, mu: float) -> Estimate:
    """
    基于逆核的原始问题解 f̂ = (ΨᵀΨ + μS K^{-1})^{-1} Ψᵀ y

    适用于 K^{-1} 稀疏或闭式已知、而 K 本身难以获得的情形
    """
    if mu <= 0:
        raise ValueError(f"μ 必须为正: {mu}")
    n = k_inv.size
    samples.check(n)
    system = mu * samples.size * k_inv.inv_matrix
    system[samples.indices, samples.indices] += 1.0
    rhs = np.zeros(n)
    rhs[samples.indices] = samples.observations
    values = _solve_psd(system, rhs, fallback=False)
    return Estimate(values, None, f"primal[{k_inv.provenance}]")


def ls_bandlimited(spec: Spectrum, band, samples: SampleSet) -> Estimate:
    """
    带限信号的最小二乘估计

    f̂ = U_ℱ [U_ℱᵀ Ψᵀ Ψ U_ℱ]^{-1} U_ℱᵀ Ψᵀ y

    Raises:
        Unidentifiable: S < |ℱ| 或法方程条件数超过 1e12
    """
    samples.check(spec.size)
    u_band = spec.band(sorted(set(band)))
    width = u_band.shape[1]
    if samples.size < width:
        raise Unidentifiable(f"采样数 S={samples.size} 小于带宽 |ℱ|={width}")

    rows = u_band[samples.indices, :]
    cond = np.linalg.cond(rows.T @ rows)
    if not np.isfinite(cond) or cond > UNIDENTIFIABLE_COND:
        raise Unidentifiable("U_ℱᵀΨᵀΨU_ℱ 奇异，信号不可辨识", cond)

    coeffs, _, _, _ = scipy.linalg.lstsq(rows, samples.observations)
    return Estimate(u_band @ coeffs, None, f"ls_bandlimited(B={width})")


def ridge_smoother(k: KernelMatrix, y_full: np.ndarray, mu: float) -> Estimate:
    """
    岭回归平滑器（所有顶点均被观测）f̂ = K(K + μN I)^{-1} y

    Laplacian 核走谱域快速路径：f̂ = U g̃(Λ) Uᵀ y，g̃ = r†/(r† + μN)
    """
    if mu <= 0:
        raise ValueError(f"μ 必须为正: {mu}")
    y = np.asarray(y_full, dtype=float)
    n = k.size
    if y.shape != (n,):
        raise DimensionMismatch(f"信号长度 {y.shape} 与核维度 {n} 不一致")

    if k.spectrum is not None and k.spectral_weights is not None:
        w = k.spectral_weights
        response = w / (w + mu * n)
        u = k.spectrum.eigenvectors
        return Estimate(u @ (response * (u.T @ y)), None, f"smoother[{k.provenance}]")

    solved = _solve_psd(k.matrix + mu * n * np.eye(n), y)
    return Estimate(k.matrix @ solved, None, f"smoother[{k.provenance}]")


def lmmse(c: np.ndarray, noise_var: float, samples: SampleSet) -> Estimate:
    """
    线性最小均方误差估计 f̂ = CΨᵀ[ΨCΨᵀ + σ_e² I]^{-1} y

    与 krr(covariance_kernel(C), samples, σ_e²/S) 相同
    """
    if noise_var < 0:
        raise ValueError(f"噪声方差必须非负: {noise_var}")
    c = np.asarray(c, dtype=float)
    samples.check(c.shape[0])
    values, alpha = _representer_solve(c, samples, noise_var, fallback=noise_var > 0)
    return Estimate(values, alpha, "lmmse")


# ===== 表示定理分解 =====

def representer_split(k: np.ndarray, samples: SampleSet,
                      alpha_full: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    把任意 N 维系数 ᾱ 拆成 Ψᵀα + β，满足 ΨKβ = 0 且 KΨᵀα + Kβ = Kᾱ

    α 取 K^{1/2}Ψᵀ α ≈ K^{1/2}ᾱ 的最小二乘解，残差与 range(K^{1/2}Ψᵀ) 正交

    Returns:
        (alpha, beta)
    """
    k = np.asarray(k, dtype=float)
    alpha_full = np.asarray(alpha_full, dtype=float)
    samples.check(k.shape[0])
    root = kernel_sqrt(k)
    alpha, _, _, _ = scipy.linalg.lstsq(root[:, samples.indices], root @ alpha_full)
    beta = alpha_full.copy()
    beta[samples.indices] -= alpha
    return alpha, beta


# ===== Markov 随机场局部条件 =====

def _local_terms(c: np.ndarray, est: Estimate) -> Tuple[np.ndarray, np.ndarray]:
    """由精度矩阵得到邻域线性预测 Σ_{m≠n}(-s_nm/s_nn) f̂_m 与条件方差 1/s_nn"""
    c = np.asarray(c, dtype=float)
    cond = np.linalg.cond(c)
    if not np.isfinite(cond) or cond > UNIDENTIFIABLE_COND:
        raise SingularPrecision(f"协方差矩阵不可逆（条件数 {cond:.3e}）")
    precision = scipy.linalg.inv(c)
    precision = 0.5 * (precision + precision.T)
    diag = np.diag(precision)
    if np.any(diag <= 0):
        raise SingularPrecision("精度矩阵对角元必须为正")

    f_hat = np.asarray(est.values, dtype=float)
    off = precision - np.diag(diag)
    prediction = -(off @ f_hat) / diag
    return prediction, 1.0 / diag


def markov_residuals(c: np.ndarray, noise_var: float, samples: SampleSet,
                     est: Estimate) -> np.ndarray:
    """
    逐顶点检查局部 LMMSE 最优条件的残差

    未观测顶点：f̂_n - 邻域预测；
    观测顶点：y_n - [f̂_n + (σ_e²/σ²_{n|𝒩_n})(f̂_n - 邻域预测)]

    Args:
        c: 协方差矩阵（可逆）
        noise_var: σ_e²
        samples: 采样集
        est: krr(C, σ_e²/S) 的估计

    Returns:
        N 维残差向量
    """
    prediction, cond_var = _local_terms(c, est)
    f_hat = np.asarray(est.values, dtype=float)
    samples.check(f_hat.shape[0])

    residuals = f_hat - prediction
    idx = samples.indices
    corrected = f_hat[idx] + noise_var / cond_var[idx] * (f_hat[idx] - prediction[idx])
    residuals[idx] = samples.observations - corrected
    return residuals


def local_noise_estimates(c: np.ndarray, noise_var: float, samples: SampleSet,
                          est: Estimate) -> np.ndarray:
    """观测顶点上的局部噪声估计 ê_n = (σ_e²/σ²_{n|𝒩_n})(f̂_n - 邻域预测)，长度 S"""
    prediction, cond_var = _local_terms(c, est)
    idx = samples.indices
    f_hat = np.asarray(est.values, dtype=float)
    return noise_var / cond_var[idx] * (f_hat[idx] - prediction[idx])
