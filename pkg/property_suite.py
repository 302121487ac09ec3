"""
性质检查套件
以固定规模和容差验证各模块的数学性质（表示定理等价、带限极限、
协方差核最优性、Markov 局部条件、循环核闭式、滤波器往返、逆核等价、
ADMM / IIA 求解器契约），失败作为数据返回而不是异常
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np
import scipy.linalg

from errors import ConfigError, Unidentifiable
from estimators import (
    Estimate,
    SampleSet,
    krr,
    krr_full,
    lmmse,
    ls_bandlimited,
    markov_residuals,
    primal_estimate,
    representer_split,
    ridge_smoother,
)
from experiment_config import CovarianceMseSpec, PropertySuiteSpec
from experiments import covariance_losses
from filters import (
    FilterCoefficients,
    apply_filter,
    filter_to_kernel,
    frequency_response,
    response_scale,
    smoother_to_filter,
)
from graph_core import Graph, circular_graph, erdos_renyi, laplacian, path_graph
from kernels import (
    Bandlimited,
    Diffusion,
    LaplacianRegularization,
    bandlimited_kernel,
    circulant_kernel,
    covariance_kernel,
    inverse_kernel_piecewise,
    inverse_kernel_polynomial,
    laplacian_kernel,
)
from logger import Logger
from mkl import (
    SUPPORT_TOL,
    bandlimited_dictionary,
    diffusion_dictionary,
    ks_iia,
    ks_iia_smoothing,
    rs_admm,
    rs_objective,
    sparsity_path,
    support_size,
)
from spectral import graph_spectrum
from synthdata import (
    bandlimited_instance,
    gaussian_signal,
    gmrf_chain_precision,
    sample_uniform,
    trial_rng,
)

# 协方差核对比的显著性阈值（标准误倍数）
SE_MARGIN = 2.0


@dataclass(frozen=True)
class PropertyOutcome:
    """单个性质的检查结果；statistic 为与容差比较的量"""
    name: str
    passed: bool
    statistic: float
    detail: str = ""


def _connected_er(n: int, p: float, rng: np.random.Generator) -> Graph:
    """重复生成直到连通"""
    while True:
        g = erdos_renyi(n, p, rng)
        if g.is_connected():
            return g


def _outcome(name: str, statistic: float, tol: float, what: str) -> PropertyOutcome:
    passed = bool(np.isfinite(statistic) and statistic < tol)
    detail = "" if passed else f"{what} = {statistic:.3e}，容差 {tol:.0e}"
    return PropertyOutcome(name, passed, float(statistic), detail)


# ===== 估计器 =====

def check_representer(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """krr 与 krr_full 在随机小规模实例上一致（无穷范数 < 1e-8）"""
    worst = 0.0
    for i in range(spec.representer_instances):
        n = int(rng.integers(5, 31))
        g_spec = graph_spectrum(erdos_renyi(n, 0.3, rng))
        family = i % 3
        if family == 0:
            k = laplacian_kernel(g_spec, Diffusion(0.5))
        elif family == 1:
            k = laplacian_kernel(g_spec, LaplacianRegularization(float(rng.uniform(0.5, 2.0))))
        else:
            k = laplacian_kernel(g_spec, Bandlimited(tuple(range(int(rng.integers(1, n + 1)))), 10.0))
        s = int(rng.integers(1, n + 1))
        idx = sample_uniform(n, s, rng)
        samples = SampleSet(idx, rng.standard_normal(s))
        mu = (1e-3, 1e-1)[i % 2]
        diff = np.max(np.abs(krr(k, samples, mu).values - krr_full(k, samples, mu).values))
        worst = max(worst, float(diff))
    return _outcome("representer", worst, 1e-8, "max‖krr - krr_full‖∞")


def check_representer_split(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """表示定理拆分：ΨKβ = 0 且 KΨᵀα + Kβ = Kᾱ（1e-10）"""
    worst = 0.0
    for _ in range(spec.split_instances):
        n = int(rng.integers(5, 31))
        rank = int(rng.integers(1, n + 1))
        a = rng.standard_normal((n, rank)) / np.sqrt(rank)
        k = a @ a.T
        s = int(rng.integers(1, n + 1))
        samples = SampleSet(sample_uniform(n, s, rng), np.zeros(s))
        alpha_full = rng.standard_normal(n)
        alpha, beta = representer_split(k, samples, alpha_full)

        idx = samples.indices
        orth = np.max(np.abs(k[idx, :] @ beta))
        recon = np.max(np.abs(k[:, idx] @ alpha + k @ beta - k @ alpha_full))
        worst = max(worst, float(orth), float(recon))
    return _outcome("representer_split", worst, 1e-10, "max 残差")


def check_bandlimited_limit(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """β → ∞ 时带限核 KRR 趋于 LS 估计：误差随 β 递减且 β=1e6 时 < 1e-3"""
    n, band, s, mu = 30, range(5), 10, 1e-2
    g_spec = graph_spectrum(erdos_renyi(n, 0.3, rng))
    inst = bandlimited_instance(g_spec, band, 20.0, rng)

    for _ in range(100):
        samples = SampleSet.from_signal(sample_uniform(n, s, rng), inst.noisy_full)
        try:
            ls = ls_bandlimited(g_spec, band, samples).values
            break
        except Unidentifiable:
            continue
    else:
        return PropertyOutcome("bandlimited_limit", False, float("nan"), "100 次采样均不可辨识")

    errors = []
    for beta in (1e2, 1e4, 1e6):
        f_hat = krr(bandlimited_kernel(g_spec, band, beta), samples, mu).values
        errors.append(float(np.linalg.norm(f_hat - ls) / np.linalg.norm(ls)))
    decreasing = errors[0] > errors[1] > errors[2]
    passed = decreasing and errors[2] < 1e-3
    detail = "" if passed else f"相对误差 {errors}"
    return PropertyOutcome("bandlimited_limit", passed, errors[2], detail)


def check_lmmse_identity(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """lmmse(C, σ_e²) ≡ krr(C, σ_e²/S)"""
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(5, 31))
        a = rng.standard_normal((n, n))
        c = a @ a.T / n + 0.1 * np.eye(n)
        s = int(rng.integers(1, n + 1))
        samples = SampleSet(sample_uniform(n, s, rng), rng.standard_normal(s))
        noise_var = float(rng.uniform(0.01, 1.0))
        diff = lmmse(c, noise_var, samples).values - krr(covariance_kernel(c), samples, noise_var / s).values
        worst = max(worst, float(np.max(np.abs(diff))))
    return _outcome("lmmse_identity", worst, 1e-10, "max‖lmmse - krr‖∞")


def check_covariance_optimality(spec: PropertySuiteSpec, seed: int, threads: int,
                                logger: Logger) -> PropertyOutcome:
    """协方差核 KRR 的 MSE 不显著劣于任一失配扩散核（差值均值 ≤ 2 倍标准误）"""
    losses = covariance_losses(CovarianceMseSpec(), seed, spec.gmrf_trials, threads, logger)
    reference = losses.pop("krr_covariance")
    worst = -np.inf
    details = []
    for name, loss in losses.items():
        diff = reference - loss
        se = diff.std(ddof=1) / np.sqrt(diff.size)
        z = float(diff.mean() / se) if se > 0 else 0.0
        worst = max(worst, z)
        if z > SE_MARGIN:
            details.append(f"{name}: 差值均值 {diff.mean():.3e}（{z:.2f} SE）")
    return PropertyOutcome("covariance_optimality", not details, worst, "; ".join(details))


def check_markov_conditions(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """链式 GMRF 上 krr(C, σ_e²/S) 满足局部 LMMSE 条件；扰动未观测顶点后残差 ≥ 1e-3"""
    cov = CovarianceMseSpec()
    n, s = cov.n_vertices, cov.sample_count
    c = scipy.linalg.inv(gmrf_chain_precision(n, cov.coupling, cov.nugget))
    c = 0.5 * (c + c.T)
    noise_var = float(np.trace(c)) / (n * 10.0 ** (cov.snr_db / 10.0))

    f = gaussian_signal(c, rng)
    noisy = f + np.sqrt(noise_var) * rng.standard_normal(n)
    samples = SampleSet.from_signal(sample_uniform(n, s, rng), noisy)
    est = krr(covariance_kernel(c), samples, noise_var / s)
    worst = float(np.max(np.abs(markov_residuals(c, noise_var, samples, est))))

    unobserved = np.setdiff1d(np.arange(n), samples.indices)[0]
    bumped = np.array(est.values, copy=True)
    bumped[unobserved] += 0.1
    probe = abs(markov_residuals(c, noise_var, samples, Estimate(bumped))[unobserved])

    passed = worst < 1e-8 and probe >= 1e-3
    detail = "" if passed else f"最大残差 {worst:.3e}，扰动残差 {probe:.3e}"
    return PropertyOutcome("markov_conditions", passed, worst, detail)


# ===== 核 =====

def check_circulant(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """循环核闭式与谱构造一致（1e-9）；N=100 第 25 列峰值位于 25 且对称"""
    worst = 0.0
    peak_ok = True
    for n in (8, 100):
        g_spec = graph_spectrum(circular_graph(n))
        for r in (Diffusion(1.0), Diffusion(10.0), LaplacianRegularization(1.0), LaplacianRegularization(10.0)):
            closed = circulant_kernel(n, r).matrix
            worst = max(worst, float(np.max(np.abs(closed - laplacian_kernel(g_spec, r).matrix))))
            if n == 100:
                col = closed[:, 25]
                mirror = col[(50 - np.arange(n)) % n]
                peak_ok &= int(np.argmax(col)) == 25 and np.allclose(col, mirror, rtol=0, atol=1e-9)
    passed = worst < 1e-9 and peak_ok
    detail = "" if passed else f"最大偏差 {worst:.3e}，峰值/对称 {'通过' if peak_ok else '失败'}"
    return PropertyOutcome("circulant", passed, worst, detail)


def check_inverse_polynomial(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """多项式逆核 (1, σ²) 的原始解与正则化 Laplacian 核 KRR 一致（1e-7）"""
    n, s, mu, sigma2 = 20, 8, 1e-2, 2.0
    g = erdos_renyi(n, 0.3, rng)
    g_spec = graph_spectrum(g)
    samples = SampleSet(sample_uniform(n, s, rng), rng.standard_normal(s))
    primal = primal_estimate(inverse_kernel_polynomial(laplacian(g), (1.0, sigma2)), samples, mu).values
    dual = krr(laplacian_kernel(g_spec, LaplacianRegularization(sigma2)), samples, mu).values
    return _outcome("inverse_kernel_polynomial", float(np.max(np.abs(primal - dual))), 1e-7,
                    "max‖primal - krr‖∞")


def check_inverse_piecewise(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """分段逆核在 u_n 上的二次型：带内 dλ_n + ε，带外 d_n + ε（1e-9）"""
    n, band_size, d, d1, eps = 20, 5, 0.5, 1.0, 1e-3
    g_spec = graph_spectrum(_connected_er(n, 0.3, rng))
    d_tail = rng.uniform(0.1, 2.0, n - band_size)
    inv = inverse_kernel_piecewise(g_spec, band_size, d, d_tail, d1, eps).inv_matrix

    u, lam = g_spec.eigenvectors, g_spec.eigenvalues
    quad = np.einsum("in,ij,jn->n", u, inv, u)
    expected = np.concatenate([d * lam[1:band_size] + eps, d_tail + eps])
    worst = float(np.max(np.abs(quad[1:] - expected)))
    return _outcome("inverse_kernel_piecewise", worst, 1e-9, "max 特征值偏差")


# ===== 滤波器 =====

def check_filter_round_trip_a(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """岭平滑器 → 滤波器抽头 → 递推滤波，与平滑器输出一致（1e-6）"""
    mu, r = 0.01, Diffusion(1.0)
    worst = 0.0
    for g in (circular_graph(8), path_graph(8)):
        g_spec = graph_spectrum(g)
        taps = smoother_to_filter(g_spec, r, mu)
        k = laplacian_kernel(g_spec, r)
        for _ in range(5):
            y = rng.standard_normal(g.n_vertices)
            diff = apply_filter(laplacian(g), taps, y) - ridge_smoother(k, y, mu).values
            worst = max(worst, float(np.max(np.abs(diff))))
    return _outcome("filter_round_trip_a", worst, 1e-6, "max‖filter - smoother‖∞")


def check_filter_round_trip_b(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """低通抽头 → 等价核 → 岭平滑器，与缩放后的滤波输出一致（1e-8）"""
    mu = 0.01
    g = circular_graph(8)
    g_spec = graph_spectrum(g)
    worst = 0.0
    for _ in range(5):
        taps = np.zeros(g.n_vertices)
        taps[:3] = (1.0, -rng.uniform(0.05, 0.2), rng.uniform(0.0, 0.01))
        c = FilterCoefficients(taps)
        scale = response_scale(frequency_response(c, g_spec.eigenvalues))
        k = laplacian_kernel(g_spec, filter_to_kernel(c, g_spec, mu))
        y = rng.standard_normal(g.n_vertices)
        diff = ridge_smoother(k, y, mu).values - apply_filter(laplacian(g), c, y) / scale
        worst = max(worst, float(np.max(np.abs(diff))))
    return _outcome("filter_round_trip_b", worst, 1e-8, "max‖smoother - filter/s‖∞")


# ===== 多核学习 =====

def _mkl_instance(rng: np.random.Generator, n: int = 60, s: int = 30, bandwidth: int = 10):
    g_spec = graph_spectrum(erdos_renyi(n, 0.25, rng))
    inst = bandlimited_instance(g_spec, range(bandwidth), 20.0, rng)
    samples = SampleSet.from_signal(sample_uniform(n, s, rng), inst.noisy_full)
    return g_spec, samples


def check_admm_contract(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """收敛的 ADMM：‖o - ᾱ‖ ≤ ε，且目标值不高于零解"""
    eps = 1e-6
    worst = 0.0
    failures = []
    converged_runs = 0
    for i in range(3):
        g_spec, samples = _mkl_instance(rng)
        dictionary = bandlimited_dictionary(g_spec, (5, 10, 15, 20, 25), 1e4)
        mu = (1e-2, 1e-1, 1.0)[i]
        sol = rs_admm(dictionary, samples, mu, eps=eps)
        if not sol.converged:
            continue
        converged_runs += 1
        k_bars = dictionary.restricted(samples)
        obj = rs_objective(k_bars, samples, mu, sol.alpha_bar)
        zero = rs_objective(k_bars, samples, mu, np.zeros_like(sol.alpha_bar))
        worst = max(worst, sol.final_residual)
        if sol.final_residual > eps or obj > zero:
            failures.append(f"μ={mu}: 残差 {sol.final_residual:.2e}, 目标 {obj:.4e} vs {zero:.4e}")
    if converged_runs == 0:
        failures.append("没有收敛的 ADMM 运行")
    return PropertyOutcome("admm_contract", not failures, worst, "; ".join(failures))


def check_group_sparsity(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """热启动 μ 升序网格上，支撑集大小不增"""
    g_spec, samples = _mkl_instance(rng)
    dictionary = bandlimited_dictionary(g_spec, (5, 10, 15, 20, 25), 1e4)
    path = sparsity_path(dictionary, samples, np.logspace(-3, 1, 9))
    sizes = [support_size(np.sqrt(path[:, j]), SUPPORT_TOL) for j in range(path.shape[1])]
    increases = sum(1 for a, b in zip(sizes, sizes[1:]) if b > a)
    detail = "" if increases == 0 else f"支撑集大小 {sizes}"
    return PropertyOutcome("group_sparsity", increases == 0, float(increases), detail)


def check_iia_ball(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """IIA 的 θ 落在球面 ‖θ - θ₀‖ = R 上（1e-9）"""
    g_spec, samples = _mkl_instance(rng, n=30, s=15, bandwidth=5)
    dictionary = diffusion_dictionary(g_spec, (0.5, 1.0, 2.0))
    theta0, radius = np.array([0.1, 0.2, 0.3]), 0.5
    sol = ks_iia(dictionary, samples, 1e-2, theta0=theta0, radius=radius)
    gap = abs(float(np.linalg.norm(sol.theta - theta0)) - radius)
    return _outcome("iia_ball", gap, 1e-9, "|‖θ - θ₀‖ - R|")


def check_iia_smoothing(spec: PropertySuiteSpec, rng: np.random.Generator) -> PropertyOutcome:
    """全采样时谱域 IIA 与顶点域 IIA 一致（1e-8）"""
    n = 30
    g_spec = graph_spectrum(erdos_renyi(n, 0.3, rng))
    dictionary = diffusion_dictionary(g_spec, (0.5, 1.0, 2.0))
    y = bandlimited_instance(g_spec, range(5), 20.0, rng).noisy_full
    mu = 1e-2
    fast = ks_iia_smoothing(dictionary, y, mu, eps=1e-10, max_iter=5000)
    slow = ks_iia(dictionary, SampleSet(np.arange(n), y), mu, eps=1e-10, max_iter=5000)
    gap = max(float(np.max(np.abs(fast.theta - slow.theta))),
              float(np.max(np.abs(fast.alpha - slow.alpha))))
    return _outcome("iia_smoothing", gap, 1e-8, "max 偏差")


PROPERTIES: "OrderedDict[str, Callable]" = OrderedDict([
    ("representer", check_representer),
    ("representer_split", check_representer_split),
    ("bandlimited_limit", check_bandlimited_limit),
    ("lmmse_identity", check_lmmse_identity),
    ("covariance_optimality", check_covariance_optimality),
    ("markov_conditions", check_markov_conditions),
    ("circulant", check_circulant),
    ("inverse_kernel_polynomial", check_inverse_polynomial),
    ("inverse_kernel_piecewise", check_inverse_piecewise),
    ("filter_round_trip_a", check_filter_round_trip_a),
    ("filter_round_trip_b", check_filter_round_trip_b),
    ("admm_contract", check_admm_contract),
    ("group_sparsity", check_group_sparsity),
    ("iia_ball", check_iia_ball),
    ("iia_smoothing", check_iia_smoothing),
])

# 需要种子与线程池的性质（自行派生随机流）
_POOLED = {"covariance_optimality"}


def selected_properties(spec: PropertySuiteSpec) -> List[str]:
    """按注册顺序返回要执行的性质；未知名称抛出 ConfigError"""
    if spec.properties is None:
        return list(PROPERTIES)
    for i, name in enumerate(spec.properties):
        if name not in PROPERTIES:
            raise ConfigError(f"未知的性质 {name!r}，可选 {tuple(PROPERTIES)}", f"property_suite.properties[{i}]")
    wanted = set(spec.properties)
    return [name for name in PROPERTIES if name in wanted]


def run_properties(spec: PropertySuiteSpec, seed: int, threads: int = 1,
                   logger: Optional[Logger] = None) -> List[PropertyOutcome]:
    """
    依次执行性质检查

    每个性质使用以其注册序号为键的独立随机流，因此只选部分性质时结果不变

    Args:
        spec: 性质套件配置
        seed: 随机种子
        threads: 协方差 Monte Carlo 的线程数
        logger: 日志器

    Returns:
        PropertyOutcome 列表
    """
    logger = logger or Logger(quiet=True)
    names = selected_properties(spec)
    position = {name: i for i, name in enumerate(PROPERTIES)}
    outcomes = []
    for name in names:
        check = PROPERTIES[name]
        if name in _POOLED:
            outcome = check(spec, seed, threads, logger)
        else:
            outcome = check(spec, trial_rng(seed, position[name], 0))
        if outcome.passed:
            logger.success(f"{name}: {outcome.statistic:.3e}")
        else:
            logger.error(f"{name}: {outcome.detail}")
        outcomes.append(outcome)
    passed = sum(o.passed for o in outcomes)
    logger.info(f"性质检查：{passed}/{len(outcomes)} 通过")
    return outcomes
