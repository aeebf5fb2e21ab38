"""
误差表格的默认参数网格与参考误差值
"""
from typing import Dict, List, Optional, Tuple

from .models import ControlSpace


def default_alpha2s() -> List[float]:
    """正问题表格的列：α² = 10⁶ … 10⁻⁶，每三个量级一列"""
    return [1e6, 1e3, 1e0, 1e-3, 1e-6]


def default_beta2s() -> List[float]:
    """反问题表格的行"""
    return [1.0, 1e-2, 1e-4]


def default_gamma2s() -> List[float]:
    """反问题表格的列"""
    return [1.0, 1e2, 1e4]


def default_forward_levels() -> List[int]:
    return [3, 4, 5, 6]


# 反问题表格的网格
DEFAULT_INVERSE_LEVEL = 6
OBSERVATION_SQUARE = (0.25, 0.75)


def get_forward_reference() -> Dict[Tuple[int, int], Dict[str, object]]:
    """
    正问题 full H² 误差参考值
    返回格式: {(p, ℓ): {"errors": {α²: 误差}, "dof": 自由度}}

    p=5 行需要扩展精度，双精度下只作对照，不参与验收。
    """
    alphas = default_alpha2s()
    rows = {
        (2, 3): ([7.84e-02, 7.85e-02, 7.86e-02, 7.86e-02, 7.86e-02], 100),
        (2, 4): ([3.91e-02, 3.91e-02, 3.91e-02, 3.91e-02, 3.91e-02], 324),
        (2, 5): ([1.95e-02, 1.95e-02, 1.95e-02, 1.95e-02, 1.95e-02], 1156),
        (2, 6): ([9.76e-03, 9.76e-03, 9.76e-03, 9.76e-03, 9.76e-03], 4356),
        (5, 6): ([3.60e-09, 8.22e-09, 1.06e-07, 1.10e-06, 1.39e-05], 4761),
    }
    return {
        key: {"errors": dict(zip(alphas, errors)), "dof": dof}
        for key, (errors, dof) in rows.items()
    }


def get_inverse_reference(control_space: ControlSpace) -> Dict[Tuple[float, float], float]:
    """
    反问题 |u_h - u_d|_{H²} 参考值（p=2, ℓ=6, k=1）
    返回格式: {(β², γ²): 误差}
    """
    if control_space == ControlSpace.MAX:
        grid = [
            [9.78e-03, 3.10e-02, 0.291],
            [3.06e-02, 0.290, 0.335],
            [0.304, 0.363, 0.364],
        ]
    else:
        grid = [
            [9.76e-03, 9.76e-03, 9.76e-03],
            [9.76e-03, 9.76e-03, 9.76e-03],
            [9.76e-03, 9.76e-03, 9.88e-03],
        ]
    return {
        (beta2, gamma2): grid[i][j]
        for i, beta2 in enumerate(default_beta2s())
        for j, gamma2 in enumerate(default_gamma2s())
    }


def lookup_forward(p: int, ell: int, k: int, alpha2: float) -> Optional[float]:
    """查找正问题参考值，无对应单元格时返回 None"""
    if k != 1:
        return None
    row = get_forward_reference().get((p, ell))
    if row is None:
        return None
    return row["errors"].get(alpha2)  # type: ignore[union-attr]


def lookup_inverse(
    p: int, ell: int, k: int, beta2: float, gamma2: float, control_space: ControlSpace
) -> Optional[float]:
    if (p, ell, k) != (2, DEFAULT_INVERSE_LEVEL, 1):
        return None
    return get_inverse_reference(control_space).get((beta2, gamma2))
