"""
图滤波器模块
L 的多项式滤波器、频率响应，以及岭平滑器与图滤波器之间的双向转换
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from errors import AllZeroResponse, DimensionMismatch, IllConditioned, UnrealizableFilter
from kernels import SpectralFunction, Table, spectral_weights
from spectral import Spectrum

VANDERMONDE_COND = 1e12
DISTINCT_TOL = 1e-8   # 相对 max(1, λ_max) 的特征值合并容差
SCALE_MARGIN = 1e-6   # 缩放后响应严格小于 1


@dataclass(frozen=True)
class FilterCoefficients:
    """滤波器抽头 c_0 … c_{N-1}"""
    c: np.ndarray

    def __post_init__(self):
        c = np.array(self.c, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise ValueError("滤波器系数必须有限")
        c.flags.writeable = False
        object.__setattr__(self, "c", c)

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.c)
        return int(nz[-1]) if nz.size else 0


def apply_filter(l: np.ndarray, c: FilterCoefficients, y: np.ndarray) -> np.ndarray:
    """
    y_F = (c₀I + Σ c_n Lⁿ) y，按 y, Ly, L²y, … 逐次相乘计算（可分布式执行的递推）
    """
    l = np.asarray(l, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.shape != (l.shape[0],):
        raise DimensionMismatch(f"信号长度 {y.shape} 与 Laplacian 维度 {l.shape[0]} 不一致")

    taps = c.c
    out = taps[0] * y if taps.size else np.zeros_like(y)
    power = y
    for tap in taps[1:c.degree + 1]:
        power = l @ power
        out = out + tap * power
    return out


def frequency_response(c: FilterCoefficients, eigenvalues: np.ndarray) -> np.ndarray:
    """g̃_n = c₀ + Σ c_l λ_n^l"""
    return P.polyval(np.asarray(eigenvalues, dtype=float), c.c)


def distinct_eigenvalues(eigenvalues: np.ndarray, tol: float = DISTINCT_TOL):
    """
    合并数值意义下相等的特征值

    Returns:
        (nodes, labels)：各簇的代表值（簇均值）与每个特征值所属簇编号
    """
    lam = np.asarray(eigenvalues, dtype=float)
    order = np.argsort(lam, kind="stable")
    scale = max(1.0, float(np.abs(lam).max(initial=0.0)))
    labels = np.empty(lam.shape[0], dtype=int)

    cluster, start = -1, None
    for pos in order:
        if start is None or lam[pos] - start > tol * scale:
            cluster += 1
            start = lam[pos]
        labels[pos] = cluster

    nodes = np.array([lam[labels == k].mean() for k in range(cluster + 1)])
    return nodes, labels


def _newton_to_monomial(nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Newton 差商插值，再展开成单项式系数"""
    coef = np.array(values, dtype=float, copy=True)
    d = nodes.shape[0]
    for j in range(1, d):
        coef[j:] = (coef[j:] - coef[j - 1:-1]) / (nodes[j:] - nodes[:d - j])

    poly = np.array([coef[-1]])
    for k in range(d - 2, -1, -1):
        poly = P.polyadd(P.polymul(poly, [-nodes[k], 1.0]), [coef[k]])
    return poly


def smoother_to_filter(spec: Spectrum, r: SpectralFunction, mu: float) -> FilterCoefficients:
    """
    求与岭平滑器等价的图滤波器抽头

    在互异特征值上插值 g̃(λ) = 𝕀[r(λ)≠0]/[1 + μN r(λ)]，多项式次数为 D-1，补零到 N

    Raises:
        IllConditioned: 互异特征值上的 Vandermonde 矩阵条件数 > 1e12
    """
    if mu <= 0:
        raise ValueError(f"μ 必须为正: {mu}")
    n = spec.size
    weights = spectral_weights(r, spec.eigenvalues)
    response = weights / (weights + mu * n)

    nodes, labels = distinct_eigenvalues(spec.eigenvalues)
    targets = np.array([response[labels == k].mean() for k in range(nodes.shape[0])])

    cond = np.linalg.cond(np.vander(nodes, increasing=True))
    if not np.isfinite(cond) or cond > VANDERMONDE_COND:
        raise IllConditioned(f"{nodes.shape[0]} 个互异特征值上的插值病态", cond)

    poly = _newton_to_monomial(nodes, targets)
    taps = np.zeros(n)
    taps[:poly.shape[0]] = poly
    return FilterCoefficients(taps)


def response_scale(response: np.ndarray) -> float:
    """filter_to_kernel 使用的缩放因子 max(1, max g̃)·(1 + 1e-6)"""
    return max(1.0, float(np.max(response))) * (1.0 + SCALE_MARGIN)


def filter_to_kernel(c: FilterCoefficients, spec: Spectrum, mu: float) -> Table:
    """
    构造谱函数 r，使岭平滑器复现（缩放后的）滤波器

    g̃ 先除以 response_scale 使其严格小于 1，再取
    r(λ_n) = (1 - g̃_n)/(μN g̃_n)，g̃_n = 0 时 r = 0（该频率被滤除）

    Returns:
        Table 谱函数，note 中记录缩放因子
    """
    if mu <= 0:
        raise ValueError(f"μ 必须为正: {mu}")
    n = spec.size
    g = frequency_response(c, spec.eigenvalues)
    top = float(np.max(np.abs(g)))
    if top == 0:
        raise AllZeroResponse("滤波器频率响应全为零")

    tiny = 1e-12 * top
    if np.any(g < -tiny):
        raise UnrealizableFilter(f"频率响应出现负值 {g.min():.3e}，岭平滑器无法实现")
    g = np.where(np.abs(g) <= tiny, 0.0, g)

    scale = response_scale(g)
    g_scaled = g / scale
    r = np.zeros(n)
    live = g_scaled > 0
    r[live] = (1.0 - g_scaled[live]) / (mu * n * g_scaled[live])
    return Table(tuple(r), note=f"filter_scale={scale!r}")
