"""
错误处理模块
"""
from typing import Any, Dict, Optional
from src.logger import get_logger


EXIT_SUCCESS = 0
EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


class FolitorError(Exception):
    """所有工具包错误的基类"""
    exit_code = EXIT_NUMERICAL

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ValidationError(FolitorError):
    """输入、配置或前置条件错误"""
    exit_code = EXIT_VALIDATION


class FieldMismatchError(ValidationError):
    """截断阶数、维度或子环面格不一致"""
    pass


class BeltramiBoundError(ValidationError):
    """Beltrami系数的上确界不小于1"""
    pass


class DomainError(ValidationError):
    """算子定义域错误（平均值非零、叶不稠密）"""
    pass


class NumericalError(FolitorError):
    """数值计算失败"""
    exit_code = EXIT_NUMERICAL


class ConvergenceError(NumericalError):
    """迭代或步长控制未收敛"""
    pass


class VanishingError(NumericalError):
    """解f在过采样网格上接近零"""
    pass


class QuadratureError(NumericalError):
    """叶图积分失败"""
    pass


class ErrorHandler:
    """错误处理器"""

    def __init__(self):
        self.logger = get_logger("error_handler")

    def exit_code_for(self, error: BaseException) -> int:
        """将异常映射为进程退出码"""
        if isinstance(error, FolitorError):
            return error.exit_code
        if isinstance(error, (FileNotFoundError, PermissionError, ValueError, KeyError)):
            return EXIT_VALIDATION
        return EXIT_NUMERICAL

    def handle(self, error: BaseException, context: str = "") -> int:
        """
        记录异常并返回退出码

        Args:
            error: 捕获的异常
            context: 发生错误的子命令或阶段

        Returns:
            退出码
        """
        code = self.exit_code_for(error)
        prefix = f"[{context}] " if context else ""
        if isinstance(error, ValidationError):
            self.logger.error(f"{prefix}输入验证错误: {error}")
        elif isinstance(error, FolitorError):
            self.logger.error(f"{prefix}数值计算错误: {error}")
            for key, value in error.details.items():
                self.logger.debug(f"  {key}: {value}")
        elif code == EXIT_VALIDATION:
            self.logger.error(f"{prefix}无法读取输入: {error}")
        else:
            self.logger.exception(f"{prefix}未预期的错误: {error}")
        return code

    def describe(self, error: BaseException) -> Dict[str, Any]:
        """生成写入报告的错误摘要"""
        summary = {
            "type": type(error).__name__,
            "message": str(error),
            "exit_code": self.exit_code_for(error),
        }
        if isinstance(error, FolitorError) and error.details:
            summary["details"] = error.details
        return summary
