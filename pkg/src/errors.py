#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
异常定义模块
工具包内所有可预期的错误类型，以及它们在命令行中对应的退出码
"""


class ToolkitError(Exception):
    """工具包错误基类"""

    exit_code = 1


class ConfigError(ToolkitError):
    """配置无效（参数越界、未知配置项等）"""

    exit_code = 2


class ShapeError(ToolkitError, ValueError):
    """张量/矩阵维度不满足调用约定"""

    exit_code = 2


class MemoryBudgetError(ToolkitError):
    """请求的稠密矩阵超出配置的内存预算"""

    exit_code = 2

    def __init__(self, required_bytes: int, budget_bytes: int, hint: str = ""):
        self.required_bytes = required_bytes
        self.budget_bytes = budget_bytes
        message = (f"需要 {required_bytes / 2**20:.1f} MiB 的距离矩阵，"
                   f"超出预算 {budget_bytes / 2**20:.1f} MiB")
        if hint:
            message = f"{message}；{hint}"
        super().__init__(message)


class NumericalError(ToolkitError):
    """数值计算失败（发散、饱和等）"""

    exit_code = 3


class DivergenceError(NumericalError):
    """训练损失出现非有限值"""

    def __init__(self, step: int, loss: float):
        self.step = step
        self.loss = loss
        super().__init__(f"训练在第 {step} 步发散，loss={loss}")


class NonFiniteGradientError(NumericalError):
    """梯度中含有 NaN/Inf"""

    def __init__(self, parameter_index: int, bad_count: int):
        self.parameter_index = parameter_index
        self.bad_count = bad_count
        super().__init__(f"参数 #{parameter_index} 的梯度含 {bad_count} 个非有限值")


class SaturationError(NumericalError):
    """β 搜索触及下界仍达不到目标失真"""


class DataFormatError(ToolkitError):
    """文件格式错误（魔数、截断、版本不支持等）"""

    exit_code = 4


class DigestMismatchError(DataFormatError):
    """摘要校验失败（文件损坏或解码端模型不一致）"""
