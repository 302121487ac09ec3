"""
实验配置模块
把 YAML 配置树映射为不可变的 dataclass，未知键、类型错误、越界值一律抛出 ConfigError
"""

import dataclasses
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import yaml

from errors import ConfigError

EXPERIMENTS = (
    "nmse_vs_sigma",
    "nmse_vs_samples",
    "sparsity_path",
    "bandwidth_table",
    "property_suite",
    "interpolating_signals",
    "covariance_mse",
)
GENERATORS = ("erdos_renyi", "circular", "path", "edge_list")
LAPLACIANS = ("combinatorial", "normalized")
OUTPUT_FORMATS = ("csv", "xlsx")
THREADS_ENV = "GKR_THREADS"

# 带宽 5m + 5，m = 1..17
SEVENTEEN_BANDWIDTHS = tuple(5 * m + 5 for m in range(1, 18))


def _positive(value, path: str):
    if not value > 0:
        raise ConfigError(f"必须为正数: {value}", path)


def _optional_positive(value, path: str):
    if value is not None:
        _positive(value, path)


def _all_positive(values, path: str):
    if not values:
        raise ConfigError("列表不能为空", path)
    for i, v in enumerate(values):
        _positive(v, f"{path}[{i}]")


@dataclass(frozen=True)
class GraphSpec:
    generator: str = "erdos_renyi"
    n_vertices: int = 100
    edge_probability: float = 0.25
    edge_list: Optional[str] = None
    laplacian: str = "combinatorial"

    def check(self, path: str):
        if self.generator not in GENERATORS:
            raise ConfigError(f"未知的图生成器 {self.generator!r}，可选 {GENERATORS}", f"{path}.generator")
        if self.laplacian not in LAPLACIANS:
            raise ConfigError(f"未知的 Laplacian 类型 {self.laplacian!r}", f"{path}.laplacian")
        if self.generator == "edge_list" and not self.edge_list:
            raise ConfigError("generator 为 edge_list 时必须给出文件路径", f"{path}.edge_list")
        if self.generator != "edge_list" and self.n_vertices < 3:
            raise ConfigError(f"顶点数至少为 3: {self.n_vertices}", f"{path}.n_vertices")
        if not 0 < self.edge_probability < 1:
            raise ConfigError(f"边概率须在 (0, 1) 内: {self.edge_probability}", f"{path}.edge_probability")


@dataclass(frozen=True)
class SignalSpec:
    bandwidth: int = 20
    snr_db: float = 20.0

    def check(self, path: str):
        _positive(self.bandwidth, f"{path}.bandwidth")


@dataclass(frozen=True)
class AdmmSpec:
    rho: float = 1.0
    eps: float = 1e-6
    max_iter: int = 5000

    def check(self, path: str):
        _positive(self.rho, f"{path}.rho")
        _positive(self.eps, f"{path}.eps")
        _positive(self.max_iter, f"{path}.max_iter")


@dataclass(frozen=True)
class IiaSpec:
    eta: float = 0.5
    radius: float = 1.0
    eps: float = 1e-6
    max_iter: int = 2000
    theta0: Optional[Tuple[float, ...]] = None

    def check(self, path: str):
        if not 0 < self.eta < 1:
            raise ConfigError(f"η 须在 (0, 1) 内: {self.eta}", f"{path}.eta")
        _positive(self.radius, f"{path}.radius")
        _positive(self.eps, f"{path}.eps")
        _positive(self.max_iter, f"{path}.max_iter")
        if self.theta0 is not None and any(t < 0 for t in self.theta0):
            raise ConfigError("θ₀ 必须非负", f"{path}.theta0")


@dataclass(frozen=True)
class NmseVsSigmaSpec:
    sigma2_grid: Tuple[float, ...] = (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0)
    bandwidths: Tuple[int, ...] = (5, 10, 20, 40)
    sample_count: int = 40
    mu: float = 1e-4

    def check(self, path: str):
        _all_positive(self.sigma2_grid, f"{path}.sigma2_grid")
        _all_positive(self.bandwidths, f"{path}.bandwidths")
        _positive(self.sample_count, f"{path}.sample_count")
        _positive(self.mu, f"{path}.mu")


@dataclass(frozen=True)
class NmseVsSamplesSpec:
    sample_counts: Tuple[int, ...] = (10, 15, 20, 30, 40, 50, 60, 70, 80, 90, 100)
    dictionary_bandwidths: Tuple[int, ...] = (10, 15, 20, 25, 30)
    beta: float = 1e4
    rs_mu: float = 1e-1
    ks_mu: float = 5e-3
    ls_bandwidths: Tuple[int, ...] = (10, 20, 30)
    normalize: bool = True
    trace: Optional[float] = None

    def check(self, path: str):
        _all_positive(self.sample_counts, f"{path}.sample_counts")
        _all_positive(self.dictionary_bandwidths, f"{path}.dictionary_bandwidths")
        _all_positive(self.ls_bandwidths, f"{path}.ls_bandwidths")
        for key in ("beta", "rs_mu", "ks_mu"):
            _positive(getattr(self, key), f"{path}.{key}")
        _optional_positive(self.trace, f"{path}.trace")


@dataclass(frozen=True)
class SparsityPathSpec:
    sample_count: int = 80
    dictionary_bandwidths: Tuple[int, ...] = SEVENTEEN_BANDWIDTHS
    beta: float = 1e3
    mu_grid: Tuple[float, ...] = tuple(float(m) for m in np.logspace(-3, 1, 21))
    normalize: bool = True
    trace: Optional[float] = None

    def check(self, path: str):
        _positive(self.sample_count, f"{path}.sample_count")
        _all_positive(self.dictionary_bandwidths, f"{path}.dictionary_bandwidths")
        _positive(self.beta, f"{path}.beta")
        _optional_positive(self.trace, f"{path}.trace")
        _all_positive(self.mu_grid, f"{path}.mu_grid")
        if any(b <= a for a, b in zip(self.mu_grid, self.mu_grid[1:])):
            raise ConfigError("μ 网格必须严格升序", f"{path}.mu_grid")


@dataclass(frozen=True)
class BandwidthTableSpec:
    true_bandwidths: Tuple[int, ...] = (10, 20, 30, 40, 50)
    sample_count: int = 80
    mu: float = 1e-2
    dictionary_bandwidths: Tuple[int, ...] = SEVENTEEN_BANDWIDTHS
    beta: float = 1e3
    normalize: bool = True
    trace: Optional[float] = None

    def check(self, path: str):
        _all_positive(self.true_bandwidths, f"{path}.true_bandwidths")
        _positive(self.sample_count, f"{path}.sample_count")
        _positive(self.mu, f"{path}.mu")
        _all_positive(self.dictionary_bandwidths, f"{path}.dictionary_bandwidths")
        _positive(self.beta, f"{path}.beta")
        _optional_positive(self.trace, f"{path}.trace")


@dataclass(frozen=True)
class PropertySuiteSpec:
    properties: Optional[Tuple[str, ...]] = None   # None 表示全部
    representer_instances: int = 50
    split_instances: int = 100
    gmrf_trials: int = 2000

    def check(self, path: str):
        from property_suite import PROPERTIES

        for i, name in enumerate(self.properties or ()):
            if name not in PROPERTIES:
                raise ConfigError(f"未知的性质 {name!r}，可选 {tuple(PROPERTIES)}",
                                  f"{path}.properties[{i}]")
        _positive(self.representer_instances, f"{path}.representer_instances")
        _positive(self.split_instances, f"{path}.split_instances")
        _positive(self.gmrf_trials, f"{path}.gmrf_trials")


@dataclass(frozen=True)
class InterpolatingSpec:
    n_vertices: int = 100
    column: int = 25
    diffusion_sigma2: Tuple[float, ...] = (1.0, 10.0, 50.0)
    laplacian_reg_sigma2: Tuple[float, ...] = (1.0, 10.0, 100.0)

    def check(self, path: str):
        if self.n_vertices < 3:
            raise ConfigError(f"环形图至少 3 个顶点: {self.n_vertices}", f"{path}.n_vertices")
        if not 0 <= self.column < self.n_vertices:
            raise ConfigError(f"列号须在 [0, {self.n_vertices}) 内", f"{path}.column")
        _all_positive(self.diffusion_sigma2, f"{path}.diffusion_sigma2")
        _all_positive(self.laplacian_reg_sigma2, f"{path}.laplacian_reg_sigma2")


@dataclass(frozen=True)
class CovarianceMseSpec:
    n_vertices: int = 40
    sample_count: int = 15
    snr_db: float = 10.0
    coupling: float = 1.0
    nugget: float = 0.1
    diffusion_sigma2: Tuple[float, ...] = (1.0, 3.0, 10.0)

    def check(self, path: str):
        if self.n_vertices < 2:
            raise ConfigError(f"链式图至少 2 个顶点: {self.n_vertices}", f"{path}.n_vertices")
        if not 1 <= self.sample_count <= self.n_vertices:
            raise ConfigError("sample_count 须在 [1, n_vertices] 内", f"{path}.sample_count")
        _positive(self.coupling, f"{path}.coupling")
        _positive(self.nugget, f"{path}.nugget")
        _all_positive(self.diffusion_sigma2, f"{path}.diffusion_sigma2")


@dataclass(frozen=True)
class OutputSpec:
    formats: Tuple[str, ...] = ("csv",)
    output_base: str = "output/"

    def check(self, path: str):
        for i, fmt in enumerate(self.formats):
            if fmt not in OUTPUT_FORMATS:
                raise ConfigError(f"未知的输出格式 {fmt!r}，可选 {OUTPUT_FORMATS}", f"{path}.formats[{i}]")
        if "csv" not in self.formats:
            raise ConfigError("formats 必须包含 csv", f"{path}.formats")


@dataclass(frozen=True)
class DebugSpec:
    enabled: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    """一次实验的完整配置"""
    experiment: str
    seed: int = 2017
    trials: int = 100
    threads: Optional[int] = None
    graph: GraphSpec = field(default_factory=GraphSpec)
    signal: SignalSpec = field(default_factory=SignalSpec)
    nmse_vs_sigma: NmseVsSigmaSpec = field(default_factory=NmseVsSigmaSpec)
    nmse_vs_samples: NmseVsSamplesSpec = field(default_factory=NmseVsSamplesSpec)
    sparsity_path: SparsityPathSpec = field(default_factory=SparsityPathSpec)
    bandwidth_table: BandwidthTableSpec = field(default_factory=BandwidthTableSpec)
    property_suite: PropertySuiteSpec = field(default_factory=PropertySuiteSpec)
    interpolating_signals: InterpolatingSpec = field(default_factory=InterpolatingSpec)
    covariance_mse: CovarianceMseSpec = field(default_factory=CovarianceMseSpec)
    admm: AdmmSpec = field(default_factory=AdmmSpec)
    iia: IiaSpec = field(default_factory=IiaSpec)
    output: OutputSpec = field(default_factory=OutputSpec)
    debug: DebugSpec = field(default_factory=DebugSpec)
    source: Optional[str] = field(default=None, compare=False)

    def check(self, path: str = ""):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"未知的实验 {self.experiment!r}，可选 {EXPERIMENTS}", "experiment")
        if self.seed < 0:
            raise ConfigError(f"seed 必须非负: {self.seed}", "seed")
        _positive(self.trials, "trials")
        if self.threads is not None:
            _positive(self.threads, "threads")
        # edge_list 的顶点数要读文件才知道，由运行器在建图后校验
        if self.graph.generator != "edge_list":
            for key_path, value in self.vertex_bounded():
                if value > self.graph.n_vertices:
                    raise ConfigError(f"{value} 超过顶点数 {self.graph.n_vertices}", key_path)

    def vertex_bounded(self) -> list:
        """
        当前实验中不能超过图顶点数 N 的带宽与采样数

        Returns:
            [(键路径, 值)]
        """
        name = self.experiment
        sec = self.section
        lists = {
            "nmse_vs_sigma": ("bandwidths",),
            "nmse_vs_samples": ("sample_counts", "dictionary_bandwidths", "ls_bandwidths"),
            "sparsity_path": ("dictionary_bandwidths",),
            "bandwidth_table": ("true_bandwidths", "dictionary_bandwidths"),
        }.get(name, ())
        scalars = {
            "nmse_vs_sigma": ("sample_count",),
            "sparsity_path": ("sample_count",),
            "bandwidth_table": ("sample_count",),
        }.get(name, ())

        bounded = []
        if name in ("nmse_vs_samples", "sparsity_path"):
            bounded.append(("signal.bandwidth", self.signal.bandwidth))
        for key in scalars:
            bounded.append((f"{name}.{key}", getattr(sec, key)))
        for key in lists:
            bounded.extend((f"{name}.{key}[{i}]", v) for i, v in enumerate(getattr(sec, key)))
        return bounded

    @property
    def section(self):
        """当前实验对应的参数段"""
        return getattr(self, self.experiment)

    def with_overrides(self, seed: Optional[int] = None, trials: Optional[int] = None,
                       threads: Optional[int] = None) -> "ExperimentConfig":
        """命令行参数覆盖配置文件"""
        changes = {k: v for k, v in (("seed", seed), ("trials", trials), ("threads", threads))
                   if v is not None}
        cfg = dataclasses.replace(self, **changes)
        cfg.check()
        return cfg

    def resolved_dict(self) -> dict:
        """规范化后的配置树（只含当前实验的参数段），用于 CSV 头部回显"""
        data = _plain(dataclasses.asdict(self))
        data.pop("source", None)
        for name in EXPERIMENTS:
            if name != self.experiment:
                data.pop(name, None)
        return data

    def resolved_yaml(self) -> str:
        return yaml.safe_dump(self.resolved_dict(), sort_keys=True, allow_unicode=True,
                              default_flow_style=False)


def _plain(value):
    """tuple → list，numpy 标量 → Python 标量，便于 safe_dump"""
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


# ===== YAML → dataclass =====

def _coerce_scalar(kind, value, path: str):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"需要布尔值，得到 {value!r}", path)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"需要整数，得到 {value!r}", path)
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"需要数值，得到 {value!r}", path)
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"需要字符串，得到 {value!r}", path)
        return value
    raise ConfigError(f"不支持的字段类型 {kind}", path)


def _log_grid(value: dict, path: str) -> list:
    """{log_start, log_stop, num} 形式的对数网格"""
    allowed = {"log_start", "log_stop", "num"}
    unknown = set(value) - allowed
    if unknown:
        raise ConfigError(f"未知的网格键 {sorted(unknown)}", path)
    if set(value) != allowed:
        raise ConfigError(f"对数网格需要键 {sorted(allowed)}", path)
    num = _coerce_scalar(int, value["num"], f"{path}.num")
    _positive(num, f"{path}.num")
    start = _coerce_scalar(float, value["log_start"], f"{path}.log_start")
    stop = _coerce_scalar(float, value["log_stop"], f"{path}.log_stop")
    return [float(v) for v in np.logspace(start, stop, num)]


def _coerce(kind, value, path: str):
    origin = typing.get_origin(kind)
    if origin is Union:
        args = [a for a in typing.get_args(kind) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, path)
    if origin is tuple:
        item_kind = typing.get_args(kind)[0]
        if isinstance(value, dict) and item_kind is float:
            value = _log_grid(value, path)
        if not isinstance(value, list):
            raise ConfigError(f"需要列表，得到 {value!r}", path)
        return tuple(_coerce_scalar(item_kind, v, f"{path}[{i}]") for i, v in enumerate(value))
    if dataclasses.is_dataclass(kind):
        return _build(kind, value, path)
    if value is None:
        raise ConfigError("不能为空", path)
    return _coerce_scalar(kind, value, path)


def _build(cls, raw, path: str):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"需要映射，得到 {type(raw).__name__}", path or "<root>")

    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.name != "source"}
    unknown = sorted(set(raw) - names)
    if unknown:
        where = f"{path}.{unknown[0]}" if path else str(unknown[0])
        raise ConfigError(f"未知的配置键 {unknown}", where)

    kwargs = {}
    for name in names:
        if name in raw:
            kwargs[name] = _coerce(hints[name], raw[name], f"{path}.{name}" if path else name)
    try:
        obj = cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"缺少必填键: {e}", path or "<root>")
    if hasattr(obj, "check"):
        obj.check(path)
    return obj


def parse_config(raw: dict, source: Optional[str] = None) -> ExperimentConfig:
    """由已解析的 YAML 映射构建并校验配置"""
    if not isinstance(raw, dict) or "experiment" not in raw:
        raise ConfigError("配置缺少必填键 experiment", "experiment")
    cfg = _build(ExperimentConfig, raw, "")
    return dataclasses.replace(cfg, source=source)


def load_config(config_path: Union[str, Path]) -> ExperimentConfig:
    """
    读取 YAML 配置文件

    Args:
        config_path: 配置文件路径；edge_list 的相对路径按配置文件所在目录解析

    Returns:
        ExperimentConfig
    """
    path = Path(config_path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"配置文件不存在: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"YAML 解析失败: {e}")

    cfg = parse_config(raw, source=str(path))
    edge_list = cfg.graph.edge_list
    if edge_list and not Path(edge_list).is_absolute():
        graph = dataclasses.replace(cfg.graph, edge_list=str(path.parent / edge_list))
        cfg = dataclasses.replace(cfg, graph=graph)
    return cfg


def resolve_threads(cfg: ExperimentConfig, cli_threads: Optional[int] = None) -> int:
    """线程数优先级：--threads > 配置 threads > 环境变量 GKR_THREADS > min(4, CPU 数)"""
    if cli_threads is not None:
        return max(1, int(cli_threads))
    if cfg.threads is not None:
        return cfg.threads
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"环境变量 {THREADS_ENV} 不是整数: {env!r}", THREADS_ENV)
        if value < 1:
            raise ConfigError(f"环境变量 {THREADS_ENV} 必须 ≥ 1: {value}", THREADS_ENV)
        return value
    return min(4, os.cpu_count() or 1)
