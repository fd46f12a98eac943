class CdrToolError(Exception):
    """cdrtool 的基础异常"""

    exit_code = 1


class ConfigurationError(CdrToolError):
    """配置无效或输入路径缺失时抛出"""

    exit_code = 2


class ArgumentError(CdrToolError, ValueError):
    """函数参数违反前置条件时抛出"""

    exit_code = 2


class DataQualityError(CdrToolError):
    """输入数据质量不可接受时抛出(例如坏行比例超过阈值)"""

    exit_code = 1


class MalformedRowError(DataQualityError):
    """单行数据无法解析时抛出"""

    def __init__(self, reason: str, line_no: int | None = None):
        self.reason = reason
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(f"{where}{reason}")


class InvariantViolation(CdrToolError):
    """内部一致性约束被破坏时抛出"""

    exit_code = 3


class UndefinedCorrelationError(DataQualityError):
    """相关系数无定义(方差为零)时抛出"""


class StoreError(CdrToolError):
    """存储读写失败时抛出"""

    exit_code = 1
