"""
日志记录器模块
"""
import logging
import os
import sys
from typing import TYPE_CHECKING, Optional
from src.config import LoggingConfig

if TYPE_CHECKING:
    from src.models import ValidationResult


ROOT_LOGGER_NAME = "folitor"


class Logger:
    """日志记录器"""

    def __init__(self, name: str):
        self.logger = logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")

    def _emit(self, level: int, message: str, **kwargs):
        # 记录调用方而不是包装器本身的位置
        kwargs.setdefault("stacklevel", 3)
        self.logger.log(level, message, **kwargs)

    def info(self, message: str, **kwargs):
        self._emit(logging.INFO, message, **kwargs)

    def warning(self, message: str, **kwargs):
        self._emit(logging.WARNING, message, **kwargs)

    def error(self, message: str, **kwargs):
        self._emit(logging.ERROR, message, **kwargs)

    def debug(self, message: str, **kwargs):
        self._emit(logging.DEBUG, message, **kwargs)

    def exception(self, message: str, **kwargs):
        """记录错误及当前异常的堆栈"""
        kwargs.setdefault("exc_info", True)
        self._emit(logging.ERROR, message, **kwargs)

    def log_check_result(self, name: str, passed: bool, value: float, threshold: float):
        """记录单项性质检查结果"""
        status = "通过" if passed else "失败"
        message = f"检查{status} - {name}: 值={value:.3e}, 阈值={threshold:.3e}"
        if passed:
            self.info(message)
        else:
            self.error(message)

    def log_solver_step(self, t: float, h: float, residual: float, accepted: bool):
        """记录积分步"""
        status = "接受" if accepted else "拒绝"
        self.debug(f"步{status}: t={t:.6f}, h={h:.3e}, 残差={residual:.3e}")

    def log_phase(self, name: str, seconds: float):
        """记录阶段耗时"""
        self.info(f"阶段完成 - {name}: 耗时{seconds:.2f}s")

    def log_validation(self, subject: str, result: "ValidationResult"):
        """记录校验结果：错误逐条写出，警告只计数"""
        message = (f"{subject}校验完成: 有效{result.valid_count}/{result.total_count}, "
                   f"错误{result.error_count}, 警告{result.warning_count}")
        if not result.is_valid:
            self.warning(message)
            for error in result.errors:
                self.warning(f"  校验错误: {error}")
        else:
            self.info(message)


# 全局日志记录器实例
_loggers = {}


def get_logger(name: str) -> Logger:
    """获取日志记录器实例"""
    if name not in _loggers:
        _loggers[name] = Logger(name)
    return _loggers[name]


def setup_logging(config: LoggingConfig, console_level: Optional[int] = None):
    """
    设置全局日志配置

    Args:
        config: 日志配置
        console_level: 控制台级别，默认INFO；--verbose/--quiet 会覆盖
    """
    package_logger = logging.getLogger(ROOT_LOGGER_NAME)
    level = getattr(logging, config.level.upper(), logging.INFO)
    package_logger.setLevel(min(level, console_level) if console_level is not None else level)

    for handler in package_logger.handlers[:]:
        package_logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(config.format)

    if config.file:
        log_dir = os.path.dirname(config.file)
        if log_dir and not os.path.exists(log_dir):
            os.makedirs(log_dir)
        file_handler = logging.FileHandler(config.file, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        package_logger.addHandler(file_handler)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(console_level if console_level is not None else logging.INFO)
    console_handler.setFormatter(formatter)
    package_logger.addHandler(console_handler)
