"""
日志管理模块
彩色控制台输出（写到 stderr，stdout 留给 CSV），以及 tqdm 进度条
"""
import io
import os
import sys

from tqdm import tqdm


class Logger:
    """控制台日志类：info / success / warning / error / debug"""

    # ANSI颜色代码
    COLOR_RESET = "\033[0m"
    COLOR_INFO = "\033[36m"      # 青色
    COLOR_SUCCESS = "\033[32m"   # 绿色
    COLOR_WARNING = "\033[33m"   # 黄色
    COLOR_ERROR = "\033[31m"     # 红色
    COLOR_DEBUG = "\033[90m"     # 灰色

    def __init__(self, debug: bool = False, quiet: bool = False, stream=None):
        """
        初始化日志器

        Args:
            debug: 是否输出 debug 信息（对应配置 debug.enabled）
            quiet: 静默模式，屏蔽 info/success 与进度条
            stream: 输出流，默认 sys.stderr
        """
        self.debug_enabled = debug
        self.quiet = quiet
        self.stream = stream if stream is not None else self._utf8_stderr()
        self.use_color = self._supports_color(self.stream)

    @staticmethod
    def _utf8_stderr():
        # 尝试将 stderr 包装为 UTF-8 编码
        try:
            if (sys.stderr.encoding or "").lower() != "utf-8":
                return io.TextIOWrapper(sys.stderr.buffer, encoding="utf-8",
                                        errors="replace", line_buffering=True)
        except (AttributeError, ValueError):
            pass
        return sys.stderr

    @staticmethod
    def _is_tty(stream) -> bool:
        isatty = getattr(stream, "isatty", None)
        try:
            return bool(isatty and isatty())
        except ValueError:
            return False

    @classmethod
    def _supports_color(cls, stream) -> bool:
        return not os.environ.get("NO_COLOR") and cls._is_tty(stream)

    def _safe_print(self, text: str):
        """安全打印，处理编码问题"""
        try:
            print(text, file=self.stream)
        except UnicodeEncodeError:
            # 最后的fallback：只保留ASCII字符
            print(text.encode("ascii", errors="replace").decode("ascii"), file=self.stream)

    def _emit(self, color: str, prefix: str, message: str):
        text = f"{prefix}{message}"
        if self.use_color:
            text = f"{color}{text}{self.COLOR_RESET}"
        self._safe_print(text)

    def info(self, message: str):
        """普通信息（青色）"""
        if not self.quiet:
            self._emit(self.COLOR_INFO, "", message)

    def success(self, message: str):
        """成功信息（绿色）"""
        if not self.quiet:
            self._emit(self.COLOR_SUCCESS, "✓ ", message)

    def warning(self, message: str):
        """警告信息（黄色）"""
        self._emit(self.COLOR_WARNING, "⚠ ", message)

    def error(self, message: str):
        """错误信息（红色）"""
        self._emit(self.COLOR_ERROR, "✗ ", message)

    def debug(self, message: str):
        """调试信息（灰色），仅在 debug.enabled 时输出"""
        if self.debug_enabled:
            self._emit(self.COLOR_DEBUG, "[debug] ", message)

    def progress(self, total: int, desc: str):
        """Monte Carlo 进度条；静默或非终端时禁用"""
        disable = self.quiet or not self._is_tty(self.stream)
        return tqdm(total=total, desc=desc, unit="trial", file=self.stream,
                    disable=disable, leave=False)
