"""
路径管理模块
负责配置文件扫描和输出路径映射
"""

from pathlib import Path
from typing import List, Optional, Union


class PathManager:
    """路径管理器"""

    def __init__(self, output_base: Union[str, Path], logger=None):
        """
        初始化路径管理器

        Args:
            output_base: 输出基础目录（配置 output.output_base）
            logger: 日志记录器实例
        """
        self.output_base = Path(output_base)
        self.logger = logger

    def scan_configs(self, folder: Union[str, Path]) -> List[Path]:
        """
        扫描文件夹下的 *.yaml / *.yml 配置（不递归），按文件名排序

        Returns:
            配置文件路径列表
        """
        folder = Path(folder)
        if not folder.is_dir():
            if self.logger:
                self.logger.error(f"配置文件夹不存在: {folder}")
            return []

        configs = sorted(p for p in folder.iterdir()
                         if p.is_file() and p.suffix in (".yaml", ".yml"))
        if self.logger:
            if configs:
                self.logger.info(f"扫描到 {len(configs)} 个配置文件")
            else:
                self.logger.warning(f"文件夹中没有 YAML 配置: {folder}")
        return configs

    def get_output_path(self, experiment: str, seed: int, config_path: Optional[Union[str, Path]] = None,
                        out: Optional[Union[str, Path]] = None) -> Path:
        """
        结果 CSV 的输出路径

        --out 优先；否则为 <output_base>/<experiment>/<配置文件名>_seed<seed>.csv

        Args:
            experiment: 实验 id
            seed: 随机种子
            config_path: 配置文件路径（取文件名主干）
            out: 命令行 --out

        Returns:
            路径（父目录已创建）
        """
        if out is not None:
            path = Path(out)
        else:
            stem = Path(config_path).stem if config_path else experiment
            path = self.output_base / experiment / f"{stem}_seed{seed}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        return path
