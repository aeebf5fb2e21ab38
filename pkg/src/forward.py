"""
加权最小二乘正问题

    min_v ‖-Δv - f‖²_Ω + α²‖v - g‖²_∂Ω

Euler-Lagrange 方程 (Δu, Δv)_Ω + α²(u, v)_∂Ω = (f, -Δv)_Ω + α²(g, v)_∂Ω，
状态空间为 S_{p,ℓ,p-1} ⊗ S_{p,ℓ,p-1}，不施加本质边界条件。
"""
import time
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .assembly import (
    DataFunction,
    LoadAction,
    boundary_mass,
    laplace_gramian_2d,
    load_vector,
)
from .error_metrics import TABLE_MIXED_WEIGHT, TensorQuadrature, field_error
from .errors import InvalidConfigError
from .linear_solve import DEFAULT_TOL, factor_and_solve
from .manufactured import ManufacturedCase, example1_case
from .models import ErrorReport, ForwardConfig, SolveReport, SparseSymmetricSystem, TensorSpace
from .splines import EXTENDED, evaluate_field, make_space, quadrature_grid


def forward_space(p: int, ell: int) -> TensorSpace:
    """最大连续性的张量空间，无边界限制"""
    space = make_space(p, ell, p - 1)
    return TensorSpace(space, space)


def _boundary_squared(space: TensorSpace, coeffs: np.ndarray, g: DataFunction, num_points: int) -> float:
    """‖u_h - g‖²_∂Ω，四条边逐单元 Gauss 积分"""
    total = 0.0
    for end in (0.0, 1.0):
        x, wx = quadrature_grid(space.x_space.breakpoints, num_points)
        edge = evaluate_field(space, coeffs, x, np.array([end]))[:, 0]
        total += float(np.sum(wx * (edge - g(x, np.full_like(x, end))) ** 2))

        y, wy = quadrature_grid(space.y_space.breakpoints, num_points)
        edge = evaluate_field(space, coeffs, np.array([end]), y)[0, :]
        total += float(np.sum(wy * (edge - g(np.full_like(y, end), y)) ** 2))
    return total


class ForwardProblem:
    """
    固定 (p, ℓ) 与数据 (f, g) 的正问题

    L、边界质量矩阵与两个载荷向量按扩展精度只组装一次，对不同 α² 复用；
    小 α² 时核空间分量由 α²B 决定，双精度组装的舍入会被 1/α² 放大。
    """

    def __init__(self, p: int, ell: int, f: DataFunction, g: DataFunction):
        self.p = p
        self.ell = ell
        self.f = f
        self.g = g
        self.space = forward_space(p, ell)
        self.laplace = laplace_gramian_2d(self.space, self.space, dtype=EXTENDED)
        self.boundary = boundary_mass(self.space, self.space, dtype=EXTENDED)
        self.load_pde = load_vector(self.space, f, LoadAction.NEG_LAPLACE, dtype=EXTENDED)
        self.load_boundary = load_vector(self.space, g, LoadAction.BOUNDARY_TRACE, dtype=EXTENDED)

    @classmethod
    def from_case(cls, p: int, ell: int, case: ManufacturedCase) -> "ForwardProblem":
        if case.f is None or case.g is None:
            raise InvalidConfigError(f"算例 {case.name} 不含正问题数据 (f, g)")
        return cls(p, ell, case.f, case.g)

    def system(self, alpha2: float) -> SparseSymmetricSystem:
        """L + α²B 与右端 (f, -Δv) + α²(g, v)_∂Ω"""
        return SparseSymmetricSystem.from_matrix(
            self.laplace + alpha2 * self.boundary,
            self.load_pde + alpha2 * self.load_boundary,
        )

    def solve(self, alpha2: float, tol: float = DEFAULT_TOL) -> Tuple[np.ndarray, SolveReport]:
        return factor_and_solve(self.system(alpha2), tol=tol)

    def loss(self, coeffs: np.ndarray, alpha2: float) -> float:
        return forward_loss(self.space, coeffs, self.f, self.g, alpha2)

    def loss_constant(self, alpha2: float) -> float:
        """二次型展开中的常数项 c = ‖f‖²_Ω + α²‖g‖²_∂Ω"""
        n = self.p + 2
        quad = TensorQuadrature(self.space, n)
        zero = np.zeros(self.space.dim)
        return quad.integrate(quad.sample(self.f) ** 2) + alpha2 * _boundary_squared(
            self.space, zero, self.g, n
        )

    def quadratic_loss(self, coeffs: np.ndarray, alpha2: float) -> float:
        """uᵀAu - 2uᵀb + c"""
        system = self.system(alpha2)
        return float(
            coeffs @ (system.matrix @ coeffs) - 2.0 * coeffs @ system.rhs + self.loss_constant(alpha2)
        )


def assemble_forward(cfg: ForwardConfig, f: DataFunction, g: DataFunction) -> SparseSymmetricSystem:
    """组装正问题的对称正定系统"""
    cfg.validate()
    return ForwardProblem(cfg.p, cfg.ell, f, g).system(cfg.alpha2)


def solve_forward(
    cfg: ForwardConfig, f: DataFunction, g: DataFunction, tol: float = DEFAULT_TOL
) -> Tuple[np.ndarray, SolveReport, TensorSpace]:
    cfg.validate()
    problem = ForwardProblem(cfg.p, cfg.ell, f, g)
    coeffs, report = problem.solve(cfg.alpha2, tol)
    return coeffs, report, problem.space


def forward_loss(
    space: TensorSpace, coeffs: np.ndarray, f: DataFunction, g: DataFunction, alpha2: float
) -> float:
    """L₁(u_h)，按 p+2 点逐单元积分（与载荷向量一致）"""
    n = space.degree + 2
    quad = TensorQuadrature(space, n)
    residual = -(quad.evaluate(coeffs, 2, 0) + quad.evaluate(coeffs, 0, 2)) - quad.sample(f)
    return quad.integrate(residual ** 2) + alpha2 * _boundary_squared(space, coeffs, g, n)


def forward_convergence_study(
    p: int,
    k: int,
    ells: Sequence[int],
    alpha2s: Sequence[float],
    tol: float = DEFAULT_TOL,
    case: Optional[ManufacturedCase] = None,
    on_cell: Optional[Callable[[ErrorReport], None]] = None,
) -> List[ErrorReport]:
    """
    对每个 (ℓ, α²) 求解正问题并计算相对人造解的相对误差（∂xy 计两次）

    Args:
        p: 样条次数
        k: 人造解波数
        ells: 细化层列表
        alpha2s: 边界权重列表
        tol: 迭代精化的相对残差目标
        case: 替代算例，默认 example1_case(k)
        on_cell: 每算完一个单元格后的回调（命令行进度条用）

    Returns:
        按 (ℓ, α²) 排序的 ErrorReport 列表，ℓ 升序，α² 保持输入顺序
    """
    if not ells or not alpha2s:
        raise InvalidConfigError("ℓ 列表与 α² 列表都不能为空")
    case = case or example1_case(k)
    if case.u is None:
        raise InvalidConfigError(f"算例 {case.name} 没有精确解，无法计算误差")

    levels = sorted(set(ells))
    for ell in levels:
        for alpha2 in alpha2s:
            ForwardConfig(p, ell, alpha2, k).validate()

    reports: List[ErrorReport] = []
    for ell in levels:
        problem = ForwardProblem.from_case(p, ell, case)
        for alpha2 in alpha2s:
            start = time.perf_counter()
            coeffs, solve_report = problem.solve(alpha2, tol)
            report = field_error(
                coeffs,
                problem.space,
                case.u,
                params={"p": p, "ell": ell, "k": k, "alpha2": alpha2},
                mixed_weight=TABLE_MIXED_WEIGHT,
                relative=True,
            )
            report.residual = solve_report.residual_norm
            report.stalled = solve_report.stalled
            report.wall_time_s = time.perf_counter() - start
            reports.append(report)
            if on_cell is not None:
                on_cell(report)
    return reports
