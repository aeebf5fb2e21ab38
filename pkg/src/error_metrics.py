"""
误差范数与收敛阶
"""
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateInputError
from .manufactured import AnalyticField, Field
from .models import ErrorReport, Rectangle, TensorSpace
from .splines import collocation_matrices, element_breaks, expand_coefficients, quadrature_grid


class TensorQuadrature:
    """矩形区域上逐单元的张量 Gauss 积分，附带离散场的求值"""

    def __init__(self, space: TensorSpace, num_points: int, rect: Optional[Rectangle] = None):
        rect = rect or Rectangle.unit()
        self.space = space
        self.x, wx = quadrature_grid(element_breaks(space.x_space, lo=rect.x[0], hi=rect.x[1]), num_points)
        self.y, wy = quadrature_grid(element_breaks(space.y_space, lo=rect.y[0], hi=rect.y[1]), num_points)
        self.weights = np.outer(wx, wy)
        self._bx = collocation_matrices(space.x_space, self.x, 2)
        self._by = collocation_matrices(space.y_space, self.y, 2)

    @property
    def grid(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.x[:, None], self.y[None, :]

    def evaluate(self, coeffs: np.ndarray, dx: int = 0, dy: int = 0) -> np.ndarray:
        """离散场 ∂x^dx ∂y^dy u_h 在积分点网格上的值"""
        full = expand_coefficients(self.space, coeffs)
        return np.asarray(self._bx[dx] @ (self._by[dy] @ full.T).T)

    def sample(self, func: Field) -> np.ndarray:
        xx, yy = self.grid
        return np.broadcast_to(np.asarray(func(xx, yy), dtype=float), self.weights.shape)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(self.weights * values))


# 表格与参考值采用的约定：相对误差，∂xy 按梯度的梯度 Frobenius 范数计两次
TABLE_MIXED_WEIGHT = 2

# 误差积分的最少点数，点数再加倍时范数的变化在 1e-9 以内
MIN_ERROR_POINTS = 8


def default_error_points(degree: int) -> int:
    return max(degree + 3, MIN_ERROR_POINTS)


def field_error(
    coeffs: np.ndarray,
    space: TensorSpace,
    exact: AnalyticField,
    params: Optional[Dict[str, Any]] = None,
    num_points: Optional[int] = None,
    mixed_weight: int = 1,
    relative: bool = False,
) -> ErrorReport:
    """
    离散场相对精确函数的 L²、H¹ 半范、H² 半范与完整 H² 误差

    Args:
        coeffs: 系数向量
        space: 所在张量空间
        exact: 精确函数（含一、二阶偏导数）
        params: 回显到报告中的运行参数
        num_points: 每单元每方向积分点数，默认 max(p+3, 8)
        mixed_weight: ∂xy 项的计数次数，1 为多重指标约定，2 为梯度的梯度 Frobenius 约定
        relative: 每个范数除以精确函数在同一范数下的大小

    Returns:
        ErrorReport

    Raises:
        DegenerateInputError: relative 为真且精确函数在某个范数下为零
    """
    quad = TensorQuadrature(space, num_points or default_error_points(space.degree))

    def squared(dx: int, dy: int, func: Field) -> Tuple[float, float]:
        exact_values = quad.sample(func)
        diff = quad.evaluate(coeffs, dx, dy) - exact_values
        return quad.integrate(diff ** 2), quad.integrate(exact_values ** 2)

    l2 = np.array(squared(0, 0, exact.value))
    h1 = np.add(squared(1, 0, exact.dx), squared(0, 1, exact.dy))
    h2 = (
        np.array(squared(2, 0, exact.dxx))
        + mixed_weight * np.array(squared(1, 1, exact.dxy))
        + np.array(squared(0, 2, exact.dyy))
    )
    norms = {"l2": l2, "h1_semi": h1, "h2_semi": h2, "h2_full": l2 + h1 + h2}

    values = {}
    for name, (error_sq, exact_sq) in norms.items():
        if not relative:
            values[name] = float(np.sqrt(error_sq))
        elif exact_sq <= 0.0:
            raise DegenerateInputError(f"精确解的 {name} 范数为零，无法计算相对误差")
        else:
            values[name] = float(np.sqrt(error_sq / exact_sq))
    return ErrorReport(dof=space.dim, params=dict(params or {}), **values)


def observed_rate(errors: Sequence[float]) -> List[float]:
    """
    相邻细化层的观测收敛阶 log₂(e_ℓ / e_{ℓ+1})

    Raises:
        DegenerateInputError: 存在非正误差
    """
    values = np.asarray(errors, dtype=float)
    if np.any(values <= 0):
        raise DegenerateInputError(f"误差必须全部为正：{list(errors)}")
    return [float(r) for r in np.log2(values[:-1] / values[1:])]
