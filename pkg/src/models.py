"""
数据模型定义
"""
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Dict, List, Optional, Tuple, Any

import numpy as np
import scipy.sparse as sps

from .errors import InvalidConfigError


@dataclass(frozen=True)
class KnotVector:
    """开节点向量：端点重复 p+1 次，内部断点按重数重复"""
    degree: int
    breakpoints: Tuple[float, ...]
    multiplicities: Tuple[int, ...]  # 每个内部断点的重数

    @property
    def knots(self) -> np.ndarray:
        """展开后的节点序列"""
        interior = [
            b for b, m in zip(self.breakpoints[1:-1], self.multiplicities) for _ in range(m)
        ]
        start = [self.breakpoints[0]] * (self.degree + 1)
        end = [self.breakpoints[-1]] * (self.degree + 1)
        return np.array(start + interior + end, dtype=float)


@dataclass(frozen=True)
class SplineSpace:
    """一维 B 样条空间 S_{p,ℓ,q}"""
    knot_vector: KnotVector
    level: int
    continuity: int

    @property
    def degree(self) -> int:
        return self.knot_vector.degree

    @property
    def knots(self) -> np.ndarray:
        return self.knot_vector.knots

    @property
    def dim(self) -> int:
        """基函数个数 = 节点数 - p - 1"""
        return len(self.knots) - self.degree - 1

    @property
    def breakpoints(self) -> np.ndarray:
        return np.array(self.knot_vector.breakpoints, dtype=float)

    @property
    def num_elements(self) -> int:
        return len(self.knot_vector.breakpoints) - 1

    def __str__(self) -> str:
        return f"S(p={self.degree}, ℓ={self.level}, q={self.continuity})"


@dataclass(frozen=True)
class QuadratureRule:
    """参考区间 [-1, 1] 上的 Gauss-Legendre 积分规则"""
    nodes: Tuple[float, ...]
    weights: Tuple[float, ...]

    @property
    def num_points(self) -> int:
        return len(self.nodes)

    def mapped(self, a: float, b: float) -> Tuple[np.ndarray, np.ndarray]:
        """映射到区间 [a, b] 上的节点与权重"""
        half = 0.5 * (b - a)
        nodes = half * np.asarray(self.nodes) + 0.5 * (a + b)
        return nodes, half * np.asarray(self.weights)


@dataclass(frozen=True)
class TensorSpace:
    """两个一维空间的张量积，可选齐次 Dirichlet 限制（去掉每个方向首尾基函数）"""
    x_space: SplineSpace
    y_space: SplineSpace
    dirichlet: bool = False

    @property
    def full_shape(self) -> Tuple[int, int]:
        return self.x_space.dim, self.y_space.dim

    @property
    def keep_x(self) -> np.ndarray:
        return _kept_indices(self.x_space.dim, self.dirichlet)

    @property
    def keep_y(self) -> np.ndarray:
        return _kept_indices(self.y_space.dim, self.dirichlet)

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.keep_x), len(self.keep_y)

    @property
    def dim(self) -> int:
        nx, ny = self.shape
        return nx * ny

    @property
    def degree(self) -> int:
        return max(self.x_space.degree, self.y_space.degree)

    def __str__(self) -> str:
        suffix = "，边界为零" if self.dirichlet else ""
        return f"{self.x_space} ⊗ {self.y_space}{suffix}"


def _kept_indices(n: int, dirichlet: bool) -> np.ndarray:
    if dirichlet:
        return np.arange(1, n - 1)
    return np.arange(n)


@dataclass(frozen=True)
class Rectangle:
    """轴对齐矩形 (x0, x1) × (y0, y1)"""
    x: Tuple[float, float]
    y: Tuple[float, float]

    @classmethod
    def square(cls, lo: float, hi: float) -> "Rectangle":
        return cls((lo, hi), (lo, hi))

    @classmethod
    def unit(cls) -> "Rectangle":
        return cls((0.0, 1.0), (0.0, 1.0))

    @property
    def area(self) -> float:
        return (self.x[1] - self.x[0]) * (self.y[1] - self.y[0])

    def __str__(self) -> str:
        return f"({self.x[0]:g},{self.x[1]:g})×({self.y[0]:g},{self.y[1]:g})"


class ControlSpace(str, Enum):
    """控制空间选择"""
    MAX = "max"          # q = p-1，ΔU_h ⊄ F_h
    REDUCED = "reduced"  # q = p-3，ΔU_h ⊂ F_h


@dataclass
class ForwardConfig:
    """正问题配置"""
    p: int
    ell: int
    alpha2: float
    k: int = 1

    def validate(self) -> None:
        if self.p < 2:
            raise InvalidConfigError(f"正问题需要二阶导数，p 必须 ≥ 2（当前 p={self.p}）")
        if self.ell < 0:
            raise InvalidConfigError(f"细化层数 ℓ 必须 ≥ 0（当前 ℓ={self.ell}）")
        if not self.alpha2 > 0:
            raise InvalidConfigError(f"边界权重 α² 必须为正（当前 α²={self.alpha2}）")
        if self.k < 1:
            raise InvalidConfigError(f"波数 k 必须 ≥ 1（当前 k={self.k}）")


@dataclass
class InverseConfig:
    """反问题配置"""
    p: int
    ell: int
    beta2: float
    gamma2: float
    k: int = 1
    control_space: ControlSpace = ControlSpace.REDUCED
    gamma_rect: Rectangle = field(default_factory=lambda: Rectangle.square(0.25, 0.75))

    def validate(self) -> None:
        if self.p < 2:
            raise InvalidConfigError(f"反问题需要二阶导数，p 必须 ≥ 2（当前 p={self.p}）")
        if self.ell < 0:
            raise InvalidConfigError(f"细化层数 ℓ 必须 ≥ 0（当前 ℓ={self.ell}）")
        if not self.beta2 > 0:
            raise InvalidConfigError(f"先验权重 β² 必须为正（当前 β²={self.beta2}）")
        if not self.gamma2 > 0:
            raise InvalidConfigError(f"PDE 权重 γ² 必须为正（当前 γ²={self.gamma2}）")
        if self.k < 1:
            raise InvalidConfigError(f"波数 k 必须 ≥ 1（当前 k={self.k}）")


@dataclass
class SparseSymmetricSystem:
    """对称稀疏线性系统，只存下三角"""
    lower: sps.csr_matrix
    rhs: np.ndarray

    @classmethod
    def from_matrix(cls, matrix: sps.spmatrix, rhs: np.ndarray) -> "SparseSymmetricSystem":
        """由完整矩阵构造（取下三角）"""
        lower = sps.tril(sps.csr_matrix(matrix), format="csr")
        rhs = np.asarray(rhs)
        return cls(lower=lower, rhs=rhs.astype(np.result_type(rhs.dtype, np.float64)))

    @property
    def n(self) -> int:
        return self.lower.shape[0]

    @property
    def matrix(self) -> sps.csr_matrix:
        """完整对称矩阵 L + Lᵀ - diag"""
        diag = sps.diags(self.lower.diagonal())
        return sps.csr_matrix(self.lower + self.lower.T - diag)


@dataclass
class SolveReport:
    """线性求解诊断信息"""
    residual_norm: float            # 迭代精化后的 ‖Ax-b‖₂/‖b‖₂（扩展精度）
    refinement_steps: int
    condition_estimate: float       # 缩放后矩阵的 1-范数条件数估计
    initial_residual: float = 0.0   # 精化前的相对残差
    backward_error: float = 0.0     # ‖Ax-b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)，仅作诊断
    stalled: bool = False           # 精化结束时相对残差仍大于 tol


@dataclass
class ErrorReport:
    """单次运行的误差范数"""
    l2: float
    h1_semi: float
    h2_semi: float
    h2_full: float
    dof: int
    params: Dict[str, Any] = field(default_factory=dict)
    residual: Optional[float] = None
    wall_time_s: Optional[float] = None
    stalled: bool = False

    CSV_COLUMNS = (
        "p", "ell", "k", "alpha2", "beta2", "gamma2", "control_space", "dof",
        "l2", "h1_semi", "h2_semi", "h2_full", "residual", "wall_time_s",
    )

    def as_row(self, with_timing: bool = False) -> Dict[str, Any]:
        """按 CSV 列顺序展开，缺失参数为 None（写出为空字段）"""
        row: Dict[str, Any] = {}
        for column in self.CSV_COLUMNS:
            if column in ("l2", "h1_semi", "h2_semi", "h2_full", "dof", "residual"):
                row[column] = getattr(self, column)
            elif column == "wall_time_s":
                row[column] = self.wall_time_s if with_timing else None
            else:
                row[column] = self.params.get(column)
        return row


@dataclass
class InverseSolution:
    """反问题的离散极小点 (u_h, f_h)"""
    u_coeffs: np.ndarray
    f_coeffs: np.ndarray
    state_space: TensorSpace
    control_space: TensorSpace
    report: SolveReport
    optimality_residual: Tuple[float, float] = (0.0, 0.0)  # 两个方程块的相对残差
    condensed: bool = False


@dataclass
class RunManifest:
    """命令行运行清单：回显全部参数，可据此重跑"""
    command: str
    params: Dict[str, Any]
    outputs: List[str] = field(default_factory=list)
    wall_time: Dict[str, float] = field(default_factory=dict)  # 每个表格单元的耗时（秒）

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class SchurCheck:
    """AᵀM_f⁻¹A 与 Laplace Gramian 的二次型比较结果"""
    p: int
    ell: int
    control_space: ControlSpace
    max_relative_gap: float     # max |uᵀAᵀM⁻¹Au - ‖Δu_h‖²| / ‖Δu_h‖²
    max_excess: float           # max (uᵀAᵀM⁻¹Au - ‖Δu_h‖²) / ‖Δu_h‖²，上界成立时 ≤ 0
    num_vectors: int
    is_containment: bool
    gap_tol: float = 1e-10
    strict_gap: float = 1e-3

    @property
    def upper_bound_holds(self) -> bool:
        return self.max_excess <= self.gap_tol

    @property
    def passed(self) -> bool:
        """包含条件下恒等式成立；否则上界成立且存在严格间隙"""
        if self.is_containment:
            return self.upper_bound_holds and self.max_relative_gap <= self.gap_tol
        return self.upper_bound_holds and self.max_relative_gap > self.strict_gap

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["control_space"] = self.control_space.value
        data["upper_bound_holds"] = self.upper_bound_holds
        data["passed"] = self.passed
        return data
