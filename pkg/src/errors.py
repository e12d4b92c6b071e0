"""
仿真相关的异常类型
"""


class ConfigurationError(ValueError):
    """配置参数不合法（场景、扫描、运行长度等）"""


class DomainError(ValueError):
    """解析模型的输入超出定义域"""


class TrainingError(RuntimeError):
    """Q 网络训练出现非有限损失等异常，整次运行中止"""
