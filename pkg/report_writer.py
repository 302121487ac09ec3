"""
报告输出模块
把实验结果行写成 CSV（带 # 注释头，回显完整配置），可选导出 xlsx
"""

import csv
import io
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

from jinja2 import Template
from openpyxl import Workbook

TOOL_NAME = "graph-kernel-recon"
VERSION = "0.1.0"

COLUMNS = ("experiment", "sweep_variable", "sweep_value", "method", "metric", "value",
           "trials", "seed", "error")

HEADER_TEMPLATE = Template(
    "# {{ tool }} {{ version }}\n"
    "# experiment: {{ experiment }}\n"
    "# seed: {{ seed }}\n"
    "# trials: {{ trials }}\n"
    "{% for note in notes %}# note: {{ note }}\n{% endfor %}"
    "# config:\n"
    "{% for line in config_lines %}#   {{ line }}\n{% endfor %}"
)


@dataclass(frozen=True)
class ReportRow:
    """一行结果：(扫描点, 方法, 指标) → 数值"""
    experiment: str
    sweep_variable: str
    sweep_value: Union[int, float, str]
    method: str
    metric: str
    value: float
    trials: int
    seed: int
    error: str = ""

    def cells(self) -> List[str]:
        return [_fmt(getattr(self, name)) for name in COLUMNS]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


def render_header(experiment: str, seed: int, trials: int, config_yaml: str,
                  notes: Sequence[str] = ()) -> str:
    return HEADER_TEMPLATE.render(
        tool=TOOL_NAME,
        version=VERSION,
        experiment=experiment,
        seed=seed,
        trials=trials,
        notes=list(notes),
        config_lines=config_yaml.rstrip("\n").splitlines(),
    )


def render_csv(rows: Iterable[ReportRow], experiment: str, seed: int, trials: int,
               config_yaml: str, notes: Sequence[str] = ()) -> str:
    """
    生成完整 CSV 文本（同一输入字节级一致）

    Args:
        rows: 结果行
        experiment/seed/trials: 头部信息
        config_yaml: 规范化后的配置（ExperimentConfig.resolved_yaml()）
        notes: 附加说明

    Returns:
        CSV 字符串
    """
    buf = io.StringIO()
    buf.write(render_header(experiment, seed, trials, config_yaml, notes))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in rows:
        writer.writerow(row.cells())
    return buf.getvalue()


def read_rows(text: str) -> List[dict]:
    """读回 CSV（跳过 # 注释头），值保持字符串"""
    body = [line for line in text.splitlines() if not line.startswith("#")]
    return list(csv.DictReader(body))


class ReportWriter:
    """按配置的 output.formats 写出结果文件"""

    def __init__(self, formats: Sequence[str], logger=None):
        """
        Args:
            formats: 输出格式列表，可选 csv / xlsx
            logger: 日志记录器实例
        """
        self.formats = tuple(formats)
        self.logger = logger

    def write(self, csv_text: str, rows: Sequence[ReportRow], csv_path: Optional[Path],
              config_yaml: str = "") -> List[Path]:
        """
        写出 CSV（csv_path 为 None 时写到 stdout）及可选的 xlsx

        Returns:
            已写出的文件路径
        """
        written = []
        if csv_path is None:
            sys.stdout.write(csv_text)
            sys.stdout.flush()
        else:
            csv_path = Path(csv_path)
            csv_path.parent.mkdir(parents=True, exist_ok=True)
            csv_path.write_text(csv_text, encoding="utf-8")
            written.append(csv_path)
            if self.logger:
                self.logger.success(f"CSV已生成: {csv_path}")

        if "xlsx" in self.formats:
            if csv_path is None:
                if self.logger:
                    self.logger.warning("输出到 stdout 时跳过 xlsx 导出")
            else:
                xlsx_path = csv_path.with_suffix(".xlsx")
                export_xlsx(rows, xlsx_path, config_yaml)
                written.append(xlsx_path)
                if self.logger:
                    self.logger.success(f"Excel已生成: {xlsx_path}")
        return written


def export_xlsx(rows: Sequence[ReportRow], path: Path, config_yaml: str = "") -> Path:
    """两张表：results（结果行）与 config（配置回显）"""
    wb = Workbook()
    ws = wb.active
    ws.title = "results"
    ws.append(list(COLUMNS))
    for row in rows:
        values = []
        for name in COLUMNS:
            v = getattr(row, name)
            if isinstance(v, float) and math.isnan(v):
                v = None
            values.append(v)
        ws.append(values)

    cfg = wb.create_sheet("config")
    for line in config_yaml.splitlines():
        cfg.append([line])

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    wb.save(path)
    return path
