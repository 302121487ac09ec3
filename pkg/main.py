"""
命令行入口

子命令：
- run <config>       执行一次实验，写出 CSV（--out - 写到 stdout）
- validate <config>  校验配置并打印规范化后的 YAML
- batch <folder>     依次执行文件夹中的全部 YAML 配置
- list               列出实验与性质检查名称

退出码：0 成功；1 配置错误或运行错误；2 性质检查未全部通过
"""

import argparse
import sys
from typing import List, Optional

from errors import ConfigError, GraphKernelError
from experiment_config import EXPERIMENTS, load_config, resolve_threads
from experiments import run_experiment
from logger import Logger
from path_manager import PathManager
from property_suite import PROPERTIES
from report_writer import TOOL_NAME, VERSION, ReportWriter, render_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PROPERTY_FAILURE = 2


def run_config(config_path: str, logger: Logger, seed: Optional[int] = None,
               trials: Optional[int] = None, threads: Optional[int] = None,
               out: Optional[str] = None) -> int:
    """
    执行单个配置文件

    Args:
        config_path: YAML 配置路径
        logger: 日志器
        seed / trials: 覆盖配置中的同名项
        threads: 线程数（不写入配置回显，保证输出与并行度无关）
        out: CSV 路径；"-" 表示 stdout；None 时按 output_base 自动生成

    Returns:
        退出码
    """
    cfg = load_config(config_path).with_overrides(seed=seed, trials=trials)
    if cfg.debug.enabled:
        logger.debug_enabled = True
    n_threads = resolve_threads(cfg, threads)

    result = run_experiment(cfg, logger, n_threads)
    config_yaml = cfg.resolved_yaml()
    csv_text = render_csv(result.rows, cfg.experiment, cfg.seed, cfg.trials, config_yaml, result.notes)

    if out == "-":
        csv_path = None
    else:
        csv_path = PathManager(cfg.output.output_base, logger).get_output_path(
            cfg.experiment, cfg.seed, config_path, out)
    ReportWriter(cfg.output.formats, logger).write(csv_text, result.rows, csv_path, config_yaml)

    if result.failures:
        logger.error(f"{result.failures} 项性质检查未通过")
        return EXIT_PROPERTY_FAILURE
    return EXIT_OK


def cmd_run(args, logger: Logger) -> int:
    return run_config(args.config, logger, args.seed, args.trials, args.threads, args.out)


def cmd_validate(args, logger: Logger) -> int:
    cfg = load_config(args.config)
    sys.stdout.write(cfg.resolved_yaml())
    logger.success(f"配置有效: {args.config}（实验 {cfg.experiment}）")
    return EXIT_OK


def cmd_batch(args, logger: Logger) -> int:
    """批量模式：逐个执行，单个配置失败不影响其余配置"""
    configs = PathManager(".", logger).scan_configs(args.folder)
    if not configs:
        return EXIT_ERROR

    codes = []
    for i, path in enumerate(configs, 1):
        logger.info("=" * 60)
        logger.info(f"[{i}/{len(configs)}] {path.name}")
        try:
            codes.append(run_config(str(path), logger, args.seed, args.trials, args.threads))
        except ConfigError as e:
            logger.error(f"配置错误: {e}")
            codes.append(EXIT_ERROR)
        except GraphKernelError as e:
            logger.error(f"运行失败 ({type(e).__name__}): {e}")
            codes.append(EXIT_ERROR)

    done = sum(1 for c in codes if c == EXIT_OK)
    logger.info("=" * 60)
    logger.info(f"批量完成：{done}/{len(codes)} 个配置成功")
    return max(codes)


def cmd_list(args, logger: Logger) -> int:
    print("experiments:")
    for name in EXPERIMENTS:
        print(f"  {name}")
    print("properties:")
    for name in PROPERTIES:
        print(f"  {name}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=TOOL_NAME, description="图信号核重构实验工具")
    parser.add_argument("--version", action="version", version=f"{TOOL_NAME} {VERSION}")
    parser.add_argument("--quiet", "-q", action="store_true", help="只输出警告与错误")
    parser.add_argument("--debug", action="store_true", help="输出调试信息")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="执行一个实验配置")
    run.add_argument("config", help="YAML 配置路径")
    run.add_argument("--seed", type=int, default=None, help="覆盖配置中的 seed")
    run.add_argument("--trials", type=int, default=None, help="覆盖配置中的 trials")
    run.add_argument("--threads", type=int, default=None, help="线程数（优先于配置与环境变量）")
    run.add_argument("--out", default=None, help="CSV 输出路径，'-' 表示 stdout")
    run.set_defaults(handler=cmd_run)

    validate = sub.add_parser("validate", help="校验配置并打印规范化结果")
    validate.add_argument("config", help="YAML 配置路径")
    validate.set_defaults(handler=cmd_validate)

    batch = sub.add_parser("batch", help="执行文件夹中的全部配置")
    batch.add_argument("folder", help="配置文件夹")
    batch.add_argument("--seed", type=int, default=None)
    batch.add_argument("--trials", type=int, default=None)
    batch.add_argument("--threads", type=int, default=None)
    batch.set_defaults(handler=cmd_batch)

    lst = sub.add_parser("list", help="列出实验与性质检查")
    lst.set_defaults(handler=cmd_list)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """命令行入口，返回退出码"""
    args = build_parser().parse_args(argv)
    logger = Logger(debug=args.debug, quiet=args.quiet)
    try:
        return args.handler(args, logger)
    except ConfigError as e:
        logger.error(f"配置错误: {e}")
        return EXIT_ERROR
    except GraphKernelError as e:
        logger.error(f"运行失败 ({type(e).__name__}): {e}")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
