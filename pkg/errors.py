"""
异常定义模块
所有前置条件失败都抛出 GraphKernelError 的子类，调用方按层级捕获
"""

from typing import Optional


class GraphKernelError(Exception):
    """本工具所有异常的基类"""


# ===== 图结构 =====

class GraphError(GraphKernelError):
    """图构建/校验错误"""


class IndexOutOfRange(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class InvalidWeight(GraphError):
    """权重为负、NaN 或 Inf"""


class TooFewVertices(GraphError):
    pass


class ZeroDegreeVertex(GraphError):
    pass


class EdgeListFormatError(GraphError):
    """边列表文本格式错误（带行号）"""

    def __init__(self, message: str, line_no: Optional[int] = None):
        self.line_no = line_no
        prefix = f"第{line_no}行: " if line_no is not None else ""
        super().__init__(f"{prefix}{message}")


# ===== 谱分解 =====

class SpectralError(GraphKernelError):
    pass


class NotSymmetric(SpectralError):
    pass


class NotPSD(SpectralError):
    pass


class DimensionMismatch(SpectralError):
    pass


# ===== 核矩阵 =====

class KernelError(GraphKernelError):
    pass


class NegativeSpectralValue(KernelError):
    pass


class ZeroSpectralValue(KernelError):
    pass


class EmptyBand(KernelError):
    pass


class SingularMatrix(KernelError):
    pass


class ZeroTrace(KernelError):
    pass


class ConstraintViolation(KernelError):
    pass


class NotPositiveDefinite(KernelError):
    pass


class SpectrumMismatch(KernelError):
    pass


# ===== 估计器 =====

class EstimationError(GraphKernelError):
    pass


class SingularSystem(EstimationError):
    pass


class Unidentifiable(EstimationError):
    """带限信号不可辨识（法方程奇异），附带条件数"""

    def __init__(self, message: str, condition_number: float = float("inf")):
        self.condition_number = condition_number
        super().__init__(f"{message} (条件数 {condition_number:.3e})")


class SingularPrecision(EstimationError):
    pass


# ===== 图滤波器 =====

class FilterError(GraphKernelError):
    pass


class IllConditioned(FilterError):
    def __init__(self, message: str, condition_number: float):
        self.condition_number = condition_number
        super().__init__(f"{message} (条件数 {condition_number:.3e})")


class AllZeroResponse(FilterError):
    pass


class UnrealizableFilter(FilterError):
    """频率响应为负，无法由岭平滑器实现"""


# ===== 迭代求解器 =====

class SolverError(GraphKernelError):
    pass


class MaxIterationsExceeded(SolverError):
    """达到最大迭代次数仍未收敛，best 为残差最小的迭代点"""

    def __init__(self, message: str, best=None):
        self.best = best
        super().__init__(message)


class MklError(GraphKernelError):
    pass


class AllZero(MklError):
    """所有核系数均为零（μ 过大）"""


# ===== 合成数据 =====

class SynthError(GraphKernelError):
    pass


class ZeroSignal(SynthError):
    pass


class TooManySamples(SynthError):
    pass


class ZeroDenominator(SynthError):
    pass


# ===== 配置 =====

class ConfigError(GraphKernelError):
    """配置文件错误，key_path 为出错键的点分路径"""

    def __init__(self, message: str, key_path: str = ""):
        self.key_path = key_path
        where = f"[{key_path}] " if key_path else ""
        super().__init__(f"{where}{message}")
