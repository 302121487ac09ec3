"""
合成数据模块
带限信号、按 SNR 标定的高斯噪声、无放回均匀采样、NMSE 指标，
以及协方差核实验所用的链式 GMRF
"""

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from errors import EmptyBand, TooManySamples, ZeroDenominator, ZeroSignal
from graph_core import laplacian, path_graph
from spectral import Spectrum

RngLike = Union[int, np.random.Generator]


def trial_rng(seed: int, trial: int, stream: int = 0) -> np.random.Generator:
    """
    每次试验、每条用途一个独立子流

    PCG64，种子序列为 SeedSequence([seed, trial, stream])；与线程调度无关
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(trial), int(stream)])))


def _as_rng(rng_seed: RngLike) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.Generator(np.random.PCG64(int(rng_seed)))


@dataclass(frozen=True)
class SignalInstance:
    """一次合成实例：真值、整图带噪信号、噪声方差"""
    truth: np.ndarray
    noisy_full: np.ndarray
    noise_var: float
    band: tuple
    seed: Optional[int] = None


def bandlimited_signal(spec: Spectrum, band: Iterable[int], rng_seed: RngLike) -> np.ndarray:
    """
    f = U_ℱ f̃_ℱ，f̃_ℱ 各分量独立服从 U[0, 1]（不做去均值）
    """
    band = sorted(set(int(b) for b in band))
    if not band:
        raise EmptyBand("频带 ℱ 不能为空")
    rng = _as_rng(rng_seed)
    coeffs = rng.uniform(0.0, 1.0, size=len(band))
    return spec.band(band) @ coeffs


def add_noise(f: np.ndarray, snr_db: float, rng_seed: RngLike):
    """
    加入 i.i.d. 高斯噪声，σ_e² = ‖f‖² / (N·10^{SNR/10})

    Returns:
        (noisy, noise_var)
    """
    f = np.asarray(f, dtype=float)
    energy = float(f @ f)
    if energy == 0:
        raise ZeroSignal("信号为零，SNR 无定义")
    noise_var = energy / (f.shape[0] * 10.0 ** (snr_db / 10.0))
    rng = _as_rng(rng_seed)
    noisy = f + np.sqrt(noise_var) * rng.standard_normal(f.shape[0])
    return noisy, noise_var


def bandlimited_instance(spec: Spectrum, band: Iterable[int], snr_db: float,
                         rng: np.random.Generator, seed: Optional[int] = None) -> SignalInstance:
    band = tuple(sorted(set(int(b) for b in band)))
    truth = bandlimited_signal(spec, band, rng)
    noisy, noise_var = add_noise(truth, snr_db, rng)
    return SignalInstance(truth, noisy, noise_var, band, seed)


def sample_uniform(n_vertices: int, sample_count: int, rng_seed: RngLike) -> np.ndarray:
    """无放回均匀采样 S 个顶点（部分 Fisher–Yates），返回升序索引"""
    if sample_count > n_vertices:
        raise TooManySamples(f"采样数 {sample_count} 超过顶点数 {n_vertices}")
    if sample_count < 1:
        raise ValueError(f"采样数必须 ≥ 1: {sample_count}")
    rng = _as_rng(rng_seed)
    pool = np.arange(n_vertices)
    for i in range(sample_count):
        j = int(rng.integers(i, n_vertices))
        pool[i], pool[j] = pool[j], pool[i]
    return np.sort(pool[:sample_count])


def nmse(truth, estimates: Sequence[np.ndarray]) -> float:
    """
    Σ_trials ‖f - f̂‖² / Σ_trials ‖f‖²

    Args:
        truth: 单个真值向量（所有试验共用），或与 estimates 等长的真值列表
        estimates: 各次试验的估计
    """
    estimates = [np.asarray(e, dtype=float) for e in estimates]
    if not estimates:
        raise ValueError("估计列表不能为空")
    truth_arr = np.asarray(truth, dtype=float)
    truths = [truth_arr] * len(estimates) if truth_arr.ndim == 1 else list(truth_arr)
    if len(truths) != len(estimates):
        raise ValueError("真值与估计数量不一致")

    acc = NmseAccumulator()
    for f, f_hat in zip(truths, estimates):
        acc.add(f, f_hat)
    return acc.value()


class NmseAccumulator:
    """跨试验累加误差能量与信号能量"""

    def __init__(self):
        self.error = 0.0
        self.energy = 0.0
        self.count = 0

    def add(self, truth: np.ndarray, estimate: np.ndarray):
        diff = np.asarray(truth, dtype=float) - np.asarray(estimate, dtype=float)
        self.error += float(diff @ diff)
        self.energy += float(np.asarray(truth, dtype=float) @ np.asarray(truth, dtype=float))
        self.count += 1

    def value(self) -> float:
        if self.energy == 0:
            raise ZeroDenominator("所有试验的真值能量均为零")
        return self.error / self.energy


# ===== 协方差核实验 =====

def gmrf_chain_precision(n_vertices: int, coupling: float = 1.0, nugget: float = 0.1) -> np.ndarray:
    """链式 GMRF 的三对角精度矩阵 coupling·L_path + nugget·I"""
    if coupling <= 0 or nugget <= 0:
        raise ValueError(f"coupling 与 nugget 必须为正: {coupling}, {nugget}")
    return coupling * laplacian(path_graph(n_vertices)) + nugget * np.eye(n_vertices)


def gaussian_signal(c: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """零均值高斯信号 f ~ N(0, C)"""
    c = np.asarray(c, dtype=float)
    factor = scipy.linalg.cholesky(0.5 * (c + c.T), lower=True)
    return factor @ rng.standard_normal(c.shape[0])
