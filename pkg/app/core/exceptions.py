# 文件路径: app/core/exceptions.py
"""
异常定义

所有数值模块抛出的异常都继承 HistopolationError, CLI 据此映射退出码:
- ConfigError -> 2
- 其他 HistopolationError -> 3
"""


class HistopolationError(Exception):
    """数值计算错误基类"""
    def __init__(self, message: str, code: int = 3):
        self.message = message
        self.code = code
        super().__init__(message)


class GeometryError(HistopolationError):
    """退化单纯形 / 面索引越界"""
    pass


class BaryPolyError(HistopolationError):
    """重心多项式变量数不匹配"""
    pass


class MomentsError(HistopolationError):
    """不可积指数 / 不支持的权重 / 奇异密度下的数值求积"""
    pass


class BasisError(HistopolationError):
    """基函数构造失败 (线性相关, 核空间为空, 投影为零)"""
    pass


class UnisolvenceError(HistopolationError):
    """A 或 H 奇异, 无法唯一重构"""
    pass


class StabilityError(HistopolationError):
    """M 奇异 (面泛函线性相关) 等稳定性分析前提不满足"""
    pass


class LinearAlgebraError(HistopolationError):
    """非对称输入 / 数值奇异 Gram 矩阵"""
    pass


class MeshError(HistopolationError):
    """网格反转无法修复 / 网格文件格式错误"""
    pass


class MeshInversionError(MeshError):
    """随机扰动后出现非正体积单元 (可重采样)"""
    pass


class ConfigError(HistopolationError, ValueError):
    """命令行或配置参数非法"""
    def __init__(self, message: str):
        super().__init__(message, code=2)
