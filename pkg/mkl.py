"""
多核学习模块
- RKHS 叠加（RS）：组 Lasso，ADMM 求解
- 核叠加（KS）：插值迭代算法（IIA），含 Laplacian 核的谱域快速路径
- 稀疏路径追踪与朴素带宽估计
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from errors import AllZero, DimensionMismatch, MaxIterationsExceeded, SpectrumMismatch
from estimators import Estimate, SampleSet
from kernels import (
    Diffusion,
    KernelMatrix,
    bandlimited_kernel,
    kernel_pinv_sqrt,
    kernel_sqrt,
    laplacian_kernel,
    normalize_trace,
)
from spectral import Spectrum

SUPPORT_TOL = 1e-8


@dataclass(frozen=True)
class KernelDictionary:
    """有序的核字典 {K_m}，labels 为各核的描述（带宽 B_m 或 σ²_m）"""
    kernels: tuple
    labels: tuple

    def __post_init__(self):
        kernels, labels = tuple(self.kernels), tuple(self.labels)
        if not kernels:
            raise ValueError("核字典至少需要 1 个核")
        if len(labels) != len(kernels):
            raise DimensionMismatch(f"标签数 {len(labels)} 与核数 {len(kernels)} 不一致")
        n = kernels[0].size
        if any(k.size != n for k in kernels):
            raise DimensionMismatch("字典中的核维度不一致")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return len(self.kernels)

    @property
    def n_vertices(self) -> int:
        return self.kernels[0].size

    def restricted(self, samples: SampleSet) -> list:
        """K̄_m = Ψ K_m Ψᵀ"""
        samples.check(self.n_vertices)
        return [k.restricted(samples.indices) for k in self.kernels]


def bandlimited_dictionary(spec: Spectrum, bandwidths: Sequence[int], beta: float,
                           normalize: bool = True, trace: float = 1.0) -> KernelDictionary:
    """带限核字典，第 m 个核的频带为 {0, …, B_m - 1}；normalize 时各核迹统一为 trace"""
    kernels = []
    for bw in bandwidths:
        k = bandlimited_kernel(spec, range(int(bw)), beta)
        kernels.append(normalize_trace(k, trace) if normalize else k)
    return KernelDictionary(tuple(kernels), tuple(int(b) for b in bandwidths))


def diffusion_dictionary(spec: Spectrum, sigma2_values: Sequence[float],
                         normalize: bool = True, trace: float = 1.0) -> KernelDictionary:
    """扩散核字典"""
    kernels = []
    for s2 in sigma2_values:
        k = laplacian_kernel(spec, Diffusion(float(s2)))
        kernels.append(normalize_trace(k, trace) if normalize else k)
    return KernelDictionary(tuple(kernels), tuple(float(s) for s in sigma2_values))


def soft_threshold(a: np.ndarray, zeta: float) -> np.ndarray:
    """块软阈值 T_ζ(a) = max(0, ‖a‖ - ζ)/‖a‖ · a，‖a‖ ≤ ζ 时返回零向量"""
    a = np.asarray(a, dtype=float)
    norm = np.linalg.norm(a)
    if norm <= zeta:
        return np.zeros_like(a)
    return (1.0 - zeta / norm) * a


# ===== RKHS 叠加：ADMM =====

@dataclass(frozen=True)
class RsSolution:
    """
    RS 组 Lasso 的解

    alpha_bar / alpha 均为 M×S，第 m 行对应第 m 个核
    """
    alpha_bar: np.ndarray
    alpha: np.ndarray
    norms: np.ndarray
    iterations: int
    final_residual: float
    converged: bool = True
    # 热启动用的 ADMM 内部状态
    aux: np.ndarray = field(default=None, repr=False, compare=False)
    multipliers: np.ndarray = field(default=None, repr=False, compare=False)


def _stack_roots(k_bars: list) -> np.ndarray:
    """Φ = [K̄₁^{1/2} … K̄_M^{1/2}]，S×MS"""
    return np.hstack([kernel_sqrt(k) for k in k_bars])


def rs_objective(k_bars: list, samples: SampleSet, mu: float, alpha_bar: np.ndarray) -> float:
    """½‖y - Σ K̄_m^{1/2} ᾱ_m‖² + (Sμ/2) Σ‖ᾱ_m‖"""
    phi = _stack_roots(k_bars)
    alpha_bar = np.asarray(alpha_bar, dtype=float)
    resid = samples.observations - phi @ alpha_bar.reshape(-1)
    penalty = np.linalg.norm(alpha_bar, axis=1).sum()
    return 0.5 * float(resid @ resid) + 0.5 * samples.size * mu * float(penalty)


def rs_admm(dictionary: KernelDictionary, samples: SampleSet, mu: float, rho: float = 1.0,
            eps: float = 1e-6, max_iter: int = 5000, strict: bool = False,
            warm_start: Optional[RsSolution] = None, logger=None) -> RsSolution:
    """
    ADMM 求解 RKHS 叠加的组 Lasso

    min ½‖y - Φo‖² + (Sμ/2) Σ‖ᾱ_m‖  s.t. ᾱ - o = 0

    每轮：ᾱ_m ← T_{μS/(2ρ)}(o_m + ν_m)；o ← (ΦᵀΦ + ρI)^{-1}[Φᵀy + ρ(ᾱ - ν)]；
    ν ← ν + o - ᾱ；‖o - ᾱ‖ ≤ ε 时停止

    Args:
        dictionary: 核字典（N×N）
        samples: 采样集
        mu, rho, eps: 正则化参数、增广拉格朗日参数、停止阈值
        max_iter: 最大迭代次数
        strict: True 时未收敛抛出 MaxIterationsExceeded，否则返回残差最小的迭代点
        warm_start: 上一个 μ 的解，用于稀疏路径的热启动
        logger: 可选日志器

    Returns:
        RsSolution
    """
    if mu <= 0 or rho <= 0 or eps <= 0:
        raise ValueError(f"μ, ρ, ε 必须为正: mu={mu}, rho={rho}, eps={eps}")
    if max_iter < 1:
        raise ValueError(f"max_iter 必须 ≥ 1: {max_iter}")

    k_bars = dictionary.restricted(samples)
    m_count, s = dictionary.size, samples.size
    y = samples.observations
    phi = _stack_roots(k_bars)

    # (ΦᵀΦ + ρI)^{-1} 经 Woodbury 化为 S×S 的 (ΦΦᵀ + ρI)
    gram = phi @ phi.T + rho * np.eye(s)
    gram_factor = scipy.linalg.cho_factor(0.5 * (gram + gram.T))
    phi_t_y = phi.T @ y

    def solve_aux(q: np.ndarray) -> np.ndarray:
        return (q - phi.T @ scipy.linalg.cho_solve(gram_factor, phi @ q)) / rho

    if warm_start is not None:
        o = np.array(warm_start.aux, dtype=float)
        nu = np.array(warm_start.multipliers, dtype=float)
    else:
        o = np.zeros(m_count * s)
        nu = np.zeros(m_count * s)
    threshold = mu * s / (2.0 * rho)

    best = None
    best_residual = np.inf
    residual = np.inf
    iteration = 0
    for iteration in range(1, max_iter + 1):
        blocks = (o + nu).reshape(m_count, s)
        alpha_bar = np.vstack([soft_threshold(b, threshold) for b in blocks]).reshape(-1)
        o = solve_aux(phi_t_y + rho * (alpha_bar - nu))
        nu = nu + o - alpha_bar

        residual = float(np.linalg.norm(o - alpha_bar))
        if residual < best_residual:
            best_residual = residual
            best = (alpha_bar.copy(), o.copy(), nu.copy(), iteration)
        if residual <= eps:
            break

    converged = residual <= eps
    if converged:
        solution = _rs_solution(k_bars, alpha_bar.reshape(m_count, s), iteration, residual,
                                True, o, nu)
    else:
        b_alpha, b_o, b_nu, b_iter = best
        solution = _rs_solution(k_bars, b_alpha.reshape(m_count, s), b_iter, best_residual,
                                False, b_o, b_nu)

    if converged:
        if logger:
            logger.debug(f"ADMM 收敛：{iteration} 次迭代，‖o-ᾱ‖={residual:.2e}")
        return solution

    message = f"ADMM 在 {max_iter} 次迭代内未收敛（最小残差 {best_residual:.3e}）"
    if strict:
        raise MaxIterationsExceeded(message, best=solution)
    if logger:
        logger.warning(message)
    return solution


def _rs_solution(k_bars, alpha_bar, iterations, residual, converged, o, nu) -> RsSolution:
    alpha = np.vstack([kernel_pinv_sqrt(k) @ ab for k, ab in zip(k_bars, alpha_bar)])
    norms = np.linalg.norm(alpha_bar, axis=1)
    return RsSolution(alpha_bar, alpha, norms, iterations, residual, converged, o, nu)


def rs_reconstruct(dictionary: KernelDictionary, samples: SampleSet, sol: RsSolution) -> Estimate:
    """f̂ = Σ K_m Ψᵀ α_m，α_m = K̄_m^{-1/2} ᾱ_m"""
    samples.check(dictionary.n_vertices)
    if sol.alpha.shape != (dictionary.size, samples.size):
        raise DimensionMismatch(
            f"解的形状 {sol.alpha.shape} 与字典/采样 ({dictionary.size}, {samples.size}) 不一致")
    idx = samples.indices
    values = np.zeros(dictionary.n_vertices)
    for k, a in zip(dictionary.kernels, sol.alpha):
        values += k.matrix[:, idx] @ a
    return Estimate(values, None, "mkl_rs")


def sparsity_path(dictionary: KernelDictionary, samples: SampleSet, mu_grid: Sequence[float],
                  rho: float = 1.0, eps: float = 1e-6, max_iter: int = 5000,
                  logger=None) -> np.ndarray:
    """
    沿升序 μ 网格追踪 ‖ᾱ_m‖²，每个 μ 从上一个解热启动

    Returns:
        M×G 矩阵
    """
    grid = [float(m) for m in mu_grid]
    if not grid:
        raise ValueError("μ 网格不能为空")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("μ 网格必须严格升序")

    path = np.zeros((dictionary.size, len(grid)))
    previous = None
    for j, mu in enumerate(grid):
        previous = rs_admm(dictionary, samples, mu, rho, eps, max_iter,
                           warm_start=previous, logger=logger)
        path[:, j] = previous.norms ** 2
    return path


def support_size(norms: np.ndarray, tol: float = SUPPORT_TOL) -> int:
    return int(np.count_nonzero(np.asarray(norms) > tol))


def naive_bandwidth(norms: np.ndarray, bandwidths: Sequence[int]) -> int:
    """
    B̂ = B_{m*}，m* = argmax ‖ᾱ_m‖²；并列时取较小带宽

    Raises:
        AllZero: 所有核均未被选中（μ 过大）
    """
    norms = np.asarray(norms, dtype=float)
    bandwidths = np.asarray(bandwidths)
    if norms.shape != bandwidths.shape or norms.size == 0:
        raise DimensionMismatch("norms 与 bandwidths 长度须相同且非空")
    top = norms.max()
    if not top > 0:
        raise AllZero("所有核系数均为零，μ 过大")
    return int(bandwidths[norms >= top].min())


# ===== 核叠加：IIA =====

@dataclass(frozen=True)
class KsSolution:
    """KS 的解：核权重 θ 与系数 α"""
    theta: np.ndarray
    alpha: np.ndarray
    iterations: int
    converged: bool


def _iia_setup(m_count: int, theta0, radius: float, eta: float, theta_init):
    if radius <= 0:
        raise ValueError(f"半径 R 必须为正: {radius}")
    if not 0 < eta < 1:
        raise ValueError(f"步长 η 必须在 (0, 1) 内: {eta}")
    theta0 = np.zeros(m_count) if theta0 is None else np.asarray(theta0, dtype=float)
    if theta0.shape != (m_count,) or np.any(theta0 < 0):
        raise ValueError("θ₀ 必须为长度 M 的非负向量")
    if theta_init is None:
        theta_init = theta0 + radius / np.sqrt(m_count)
    return theta0, np.asarray(theta_init, dtype=float)


def _ball_update(theta0: np.ndarray, radius: float, v: np.ndarray) -> np.ndarray:
    """θ = θ₀ + R v/‖v‖；v 为半正定二次型，负的舍入误差截为 0"""
    v = np.clip(v, 0.0, None)
    nv = np.linalg.norm(v)
    if nv == 0:
        return theta0.copy()
    return theta0 + radius * v / nv


def _finish_iia(theta, alpha, iteration, converged, max_iter, strict, logger, tag):
    sol = KsSolution(theta, alpha, iteration, converged)
    if converged:
        if logger:
            logger.debug(f"{tag} 收敛：{iteration} 次迭代")
        return sol
    message = f"{tag} 在 {max_iter} 次迭代内未收敛"
    if strict:
        raise MaxIterationsExceeded(message, best=sol)
    if logger:
        logger.warning(message)
    return sol


def ks_iia(dictionary: KernelDictionary, samples: SampleSet, mu: float,
           theta0: Optional[np.ndarray] = None, radius: float = 1.0, eta: float = 0.5,
           eps: float = 1e-6, max_iter: int = 2000, theta_init: Optional[np.ndarray] = None,
           strict: bool = False, logger=None) -> KsSolution:
    """
    插值迭代算法求解核叠加

    θ ∈ {θ ≥ 0, ‖θ - θ₀‖ ≤ R}；
    α⁰ = (K̄(θ⁽⁰⁾) + μSI)^{-1}y；v_m = αᵀK̄_mα；θ = θ₀ + R v/‖v‖；
    α ← ηα + (1-η)(K̄(θ) + μSI)^{-1}y，直到 ‖Δα‖ < ε

    Args:
        theta_init: θ⁽⁰⁾，默认 θ₀ + (R/√M)𝟙

    Returns:
        KsSolution
    """
    if mu <= 0:
        raise ValueError(f"μ 必须为正: {mu}")
    k_bars = np.stack(dictionary.restricted(samples))
    m_count, s = dictionary.size, samples.size
    theta0, theta = _iia_setup(m_count, theta0, radius, eta, theta_init)
    y = samples.observations
    ridge = mu * s * np.eye(s)

    def solve(th: np.ndarray) -> np.ndarray:
        system = np.tensordot(th, k_bars, axes=1) + ridge
        return scipy.linalg.cho_solve(scipy.linalg.cho_factor(0.5 * (system + system.T)), y)

    alpha = solve(theta)
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        v = np.einsum("i,mij,j->m", alpha, k_bars, alpha)
        theta = _ball_update(theta0, radius, v)
        assert np.all(theta >= 0)
        new_alpha = eta * alpha + (1.0 - eta) * solve(theta)
        step = np.linalg.norm(new_alpha - alpha)
        alpha = new_alpha
        if step < eps:
            converged = True
            break

    return _finish_iia(theta, alpha, iteration, converged, max_iter, strict, logger, "IIA")


def ks_reconstruct(dictionary: KernelDictionary, samples: SampleSet, sol: KsSolution) -> Estimate:
    """f̂ = K(θ) Ψᵀ α，K(θ) = Σ θ_m K_m"""
    samples.check(dictionary.n_vertices)
    idx = samples.indices
    values = np.zeros(dictionary.n_vertices)
    for th, k in zip(sol.theta, dictionary.kernels):
        values += th * (k.matrix[:, idx] @ sol.alpha)
    return Estimate(values, sol.alpha, "mkl_ks")


def _shared_spectrum(dictionary: KernelDictionary) -> Tuple[Spectrum, np.ndarray]:
    first = dictionary.kernels[0].spectrum
    if first is None:
        raise SpectrumMismatch("谱域快速路径要求字典全部为 Laplacian 核")
    weights = []
    for k in dictionary.kernels:
        if k.spectrum is None or k.spectral_weights is None:
            raise SpectrumMismatch("谱域快速路径要求字典全部为 Laplacian 核")
        if k.spectrum is not first and not np.allclose(
                k.spectrum.eigenvectors, first.eigenvectors, rtol=0.0, atol=1e-10):
            raise SpectrumMismatch("字典中的核不共享同一组特征向量")
        weights.append(k.spectral_weights)
    return first, np.vstack(weights)


def ks_iia_smoothing(dictionary: KernelDictionary, y_full: np.ndarray, mu: float,
                     theta0: Optional[np.ndarray] = None, radius: float = 1.0,
                     eta: float = 0.5, eps: float = 1e-6, max_iter: int = 2000,
                     theta_init: Optional[np.ndarray] = None, strict: bool = False,
                     logger=None) -> KsSolution:
    """
    全部顶点均被观测时的 IIA，在图频域逐频率更新

    α̃ ← ηα̃ + (1-η) ỹ / (Σ_m θ_m r_m†(λ) + μN)，ṽ_m = Σ_n r_m†(λ_n) α̃_n²；
    结果与 ks_iia（Ψ = I）一致，返回的 α 已变换回顶点域
    """
    if mu <= 0:
        raise ValueError(f"μ 必须为正: {mu}")
    spec, weights = _shared_spectrum(dictionary)
    y = np.asarray(y_full, dtype=float)
    n = spec.size
    if y.shape != (n,):
        raise DimensionMismatch(f"信号长度 {y.shape} 与谱维度 {n} 不一致")

    theta0, theta = _iia_setup(dictionary.size, theta0, radius, eta, theta_init)
    u = spec.eigenvectors
    y_tilde = u.T @ y

    def solve(th: np.ndarray) -> np.ndarray:
        return y_tilde / (th @ weights + mu * n)

    alpha_tilde = solve(theta)
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        theta = _ball_update(theta0, radius, weights @ alpha_tilde ** 2)
        assert np.all(theta >= 0)
        new_alpha = eta * alpha_tilde + (1.0 - eta) * solve(theta)
        step = np.linalg.norm(new_alpha - alpha_tilde)
        alpha_tilde = new_alpha
        if step < eps:
            converged = True
            break

    return _finish_iia(theta, u @ alpha_tilde, iteration, converged, max_iter, strict, logger,
                       "IIA(谱域)")
