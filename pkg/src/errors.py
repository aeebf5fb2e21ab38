"""
错误类型定义

所有错误都继承自 ValueError，命令行根据类型映射退出码。
"""


class LsqIgaError(ValueError):
    """本项目所有错误的基类"""


class InvalidDegreeError(LsqIgaError):
    """样条次数不合法（p < 1）"""


class InvalidContinuityError(LsqIgaError):
    """连续性 q 不在 [-1, p-1] 内"""


class OutOfDomainError(LsqIgaError):
    """求值点不在 [0, 1] 内"""


class UnsupportedOrderError(LsqIgaError):
    """Gauss 积分点数不在 1..16 内"""


class MisalignedIntervalError(LsqIgaError):
    """积分区间端点不是两个样条空间的公共断点"""


class MisalignedSubdomainError(MisalignedIntervalError):
    """观测子区域 Γ 的角点不在节点线上（不做单元切分）"""


class NotPositiveDefiniteError(LsqIgaError):
    """Cholesky 分解遇到非正主元"""


class NotBlockDiagonalError(LsqIgaError):
    """控制空间质量矩阵存在单元间耦合，无法静态凝聚"""


class DegenerateInputError(LsqIgaError):
    """收敛阶计算的输入中存在非正误差"""


class InvalidConfigError(LsqIgaError):
    """运行配置不合法"""
