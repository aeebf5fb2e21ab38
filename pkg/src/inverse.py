"""
部分观测的源项反问题

    min_{v,g} ‖v - u_d‖²_Γ + γ²‖-Δv - g‖²_Ω + β²‖g - f_p‖²_Ω

状态 v 属于带齐次 Dirichlet 条件的 U_h = S_{p,ℓ,p-1}²，控制 g 属于 F_h = S_{p,ℓ,q}²，
q = p-1（最大连续性）或 q = p-3（满足 ΔU_h ⊂ F_h）。求解消去乘子后的两场对称正定系统

    [[M_Γ + γ²L, γ²C], [γ²Cᵀ, (β²+γ²)M_f]] [u; f] = [(u_d, v)_Γ; β²(f_p, g)_Ω]
"""
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sps
from scipy.linalg import cho_factor, cho_solve

from .assembly import (
    DataFunction,
    LoadAction,
    cross_laplace_gramian,
    laplace_gramian_2d,
    laplace_trial_gramian,
    load_vector,
    mass_2d,
    subdomain_mass,
)
from .error_metrics import TABLE_MIXED_WEIGHT, TensorQuadrature, field_error
from .errors import InvalidConfigError
from .linear_solve import DEFAULT_TOL, BandedCholesky, BlockCondensation, factor_and_solve, refine_solution
from .manufactured import ManufacturedCase, example2_case
from .models import (
    ControlSpace,
    ErrorReport,
    InverseConfig,
    InverseSolution,
    Rectangle,
    SchurCheck,
    SparseSymmetricSystem,
    TensorSpace,
)
from .reference_data import OBSERVATION_SQUARE
from .splines import EXTENDED, make_space

DEFAULT_GAMMA_RECT = Rectangle.square(*OBSERVATION_SQUARE)


def state_space(p: int, ell: int) -> TensorSpace:
    """U_h：最大连续性，边界基函数删去"""
    space = make_space(p, ell, p - 1)
    return TensorSpace(space, space, dirichlet=True)


def control_tensor_space(p: int, ell: int, control_space: ControlSpace) -> TensorSpace:
    q = p - 3 if control_space == ControlSpace.REDUCED else p - 1
    space = make_space(p, ell, q)
    return TensorSpace(space, space)


@dataclass
class InverseBlocks:
    """两场系统的各个块"""
    a_uu: sps.csr_matrix
    a_uf: sps.csr_matrix
    a_ff: sps.csr_matrix
    rhs_u: np.ndarray
    rhs_f: np.ndarray

    @property
    def num_state(self) -> int:
        return self.a_uu.shape[0]

    def system(self) -> SparseSymmetricSystem:
        matrix = sps.bmat([[self.a_uu, self.a_uf], [self.a_uf.T, self.a_ff]], format="csr")
        return SparseSymmetricSystem.from_matrix(matrix, np.concatenate([self.rhs_u, self.rhs_f]))

    def split(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        return x[:self.num_state], x[self.num_state:]


def optimality_residual(blocks: InverseBlocks, u: np.ndarray, f: np.ndarray) -> Tuple[float, float]:
    """
    一阶最优性条件两个方程块的相对残差

    分母取右端与左端各项范数的最大值，先验为零时仍有意义。
    """
    results = []
    for terms, rhs in (
        ((blocks.a_uu @ u, blocks.a_uf @ f), blocks.rhs_u),
        ((blocks.a_uf.T @ u, blocks.a_ff @ f), blocks.rhs_f),
    ):
        residual = terms[0] + terms[1] - rhs
        scale = max(np.linalg.norm(rhs), *(np.linalg.norm(t) for t in terms))
        results.append(float(np.linalg.norm(residual) / scale) if scale > 0 else 0.0)
    return results[0], results[1]


class InverseProblem:
    """
    固定 (p, ℓ, 控制空间, Γ) 与数据 (u_d, f_p) 的反问题

    与 β²、γ² 无关的 Gramian 和载荷按扩展精度只组装一次，参数扫描时复用。
    """

    def __init__(
        self,
        p: int,
        ell: int,
        control_space: ControlSpace,
        u_d: DataFunction,
        f_p: DataFunction,
        gamma_rect: Rectangle = DEFAULT_GAMMA_RECT,
    ):
        self.p = p
        self.ell = ell
        self.control = control_space
        self.gamma_rect = gamma_rect
        self.u_d = u_d
        self.f_p = f_p

        self.state_space = state_space(p, ell)
        self.control_space = control_tensor_space(p, ell, control_space)
        # Γ 未对齐时在这里抛出 MisalignedSubdomainError
        self.observation = subdomain_mass(self.state_space, self.state_space, gamma_rect, EXTENDED)
        self.load_u = load_vector(self.state_space, u_d, LoadAction.SUBDOMAIN, gamma_rect, EXTENDED)
        self.laplace = laplace_gramian_2d(self.state_space, self.state_space, EXTENDED)
        self.coupling = cross_laplace_gramian(self.state_space, self.control_space, EXTENDED)
        self.mass_f = mass_2d(self.control_space, self.control_space, EXTENDED)
        self.load_f = load_vector(self.control_space, f_p, LoadAction.IDENTITY, dtype=EXTENDED)

    @classmethod
    def from_config(cls, cfg: InverseConfig, u_d: DataFunction, f_p: DataFunction) -> "InverseProblem":
        cfg.validate()
        return cls(cfg.p, cfg.ell, cfg.control_space, u_d, f_p, cfg.gamma_rect)

    @property
    def condensable(self) -> bool:
        """间断控制空间的质量矩阵是单元块对角的，可以静态凝聚"""
        return self.control_space.x_space.continuity < 0

    @property
    def block_size(self) -> int:
        return (self.p + 1) ** 2

    def blocks(self, beta2: float, gamma2: float) -> InverseBlocks:
        return InverseBlocks(
            a_uu=sps.csr_matrix(self.observation + gamma2 * self.laplace),
            a_uf=sps.csr_matrix(gamma2 * self.coupling),
            a_ff=sps.csr_matrix((beta2 + gamma2) * self.mass_f),
            rhs_u=self.load_u,
            rhs_f=beta2 * self.load_f,
        )

    def system(self, beta2: float, gamma2: float) -> SparseSymmetricSystem:
        return self.blocks(beta2, gamma2).system()

    def solve(
        self,
        beta2: float,
        gamma2: float,
        tol: float = DEFAULT_TOL,
        condense: Optional[bool] = None,
    ) -> InverseSolution:
        """
        求解两场系统

        Args:
            beta2, gamma2: 权重
            tol: 迭代精化的相对残差目标
            condense: None 时自动选择（间断控制空间凝聚，否则整体求解）

        Raises:
            NotBlockDiagonalError: condense=True 但控制空间质量矩阵不是块对角的
        """
        blocks = self.blocks(beta2, gamma2)
        use_condense = self.condensable if condense is None else condense
        if use_condense:
            condensation = BlockCondensation(
                self.mass_f,
                self.coupling,
                self.observation,
                self.laplace,
                beta2,
                gamma2,
                block_size=self.block_size,
            )
            chol = BandedCholesky(condensation.matrix)
            # 凝聚求解作为整体块系统的近似逆，残差在扩展精度的整体系统上计算
            x, report = refine_solution(
                blocks.system(), condensation.block_solver(chol), chol.condition_estimate(), tol
            )
        else:
            x, report = factor_and_solve(blocks.system(), tol=tol)
        u, f = blocks.split(x)

        return InverseSolution(
            u_coeffs=u,
            f_coeffs=f,
            state_space=self.state_space,
            control_space=self.control_space,
            report=report,
            optimality_residual=optimality_residual(blocks, u, f),
            condensed=use_condense,
        )

    def _quadratures(self, rect: Optional[Rectangle] = None) -> Tuple[TensorQuadrature, TensorQuadrature]:
        n = self.p + 2
        return (
            TensorQuadrature(self.state_space, n, rect),
            TensorQuadrature(self.control_space, n, rect),
        )

    def loss(self, u: np.ndarray, f: np.ndarray, beta2: float, gamma2: float) -> float:
        """直接积分 ‖u_h - u_d‖²_Γ + γ²‖-Δu_h - f_h‖²_Ω + β²‖f_h - f_p‖²_Ω"""
        obs, _ = self._quadratures(self.gamma_rect)
        misfit = obs.integrate((obs.evaluate(u) - obs.sample(self.u_d)) ** 2)

        qu, qf = self._quadratures()
        pde = -(qu.evaluate(u, 2, 0) + qu.evaluate(u, 0, 2)) - qf.evaluate(f)
        prior = qf.evaluate(f) - qf.sample(self.f_p)
        return misfit + gamma2 * qu.integrate(pde ** 2) + beta2 * qf.integrate(prior ** 2)

    def loss_constant(self, beta2: float) -> float:
        """c = ‖u_d‖²_Γ + β²‖f_p‖²_Ω"""
        obs, _ = self._quadratures(self.gamma_rect)
        _, qf = self._quadratures()
        return obs.integrate(obs.sample(self.u_d) ** 2) + beta2 * qf.integrate(qf.sample(self.f_p) ** 2)

    def quadratic_loss(self, u: np.ndarray, f: np.ndarray, beta2: float, gamma2: float) -> float:
        """xᵀKx - 2xᵀb + c，K、b 为组装出的两场系统"""
        system = self.system(beta2, gamma2)
        x = np.concatenate([u, f])
        return float(x @ (system.matrix @ x) - 2.0 * x @ system.rhs + self.loss_constant(beta2))


def assemble_inverse(cfg: InverseConfig, u_d: DataFunction, f_p: DataFunction) -> SparseSymmetricSystem:
    """组装两场块系统（U_h 在前，F_h 在后）"""
    return InverseProblem.from_config(cfg, u_d, f_p).system(cfg.beta2, cfg.gamma2)


def solve_inverse(
    cfg: InverseConfig,
    u_d: DataFunction,
    f_p: DataFunction,
    tol: float = DEFAULT_TOL,
    condense: Optional[bool] = None,
) -> InverseSolution:
    problem = InverseProblem.from_config(cfg, u_d, f_p)
    return problem.solve(cfg.beta2, cfg.gamma2, tol=tol, condense=condense)


def inverse_loss(
    cfg: InverseConfig,
    u_d: DataFunction,
    f_p: DataFunction,
    solution: InverseSolution,
) -> float:
    problem = InverseProblem.from_config(cfg, u_d, f_p)
    return problem.loss(solution.u_coeffs, solution.f_coeffs, cfg.beta2, cfg.gamma2)


def inverse_parameter_sweep(
    p: int,
    ell: int,
    k: int,
    beta2s: Sequence[float],
    gamma2s: Sequence[float],
    control_space: ControlSpace,
    gamma_rect: Rectangle = DEFAULT_GAMMA_RECT,
    tol: float = DEFAULT_TOL,
    case: Optional[ManufacturedCase] = None,
    on_cell: Optional[Callable[[ErrorReport], None]] = None,
) -> List[ErrorReport]:
    """
    (β², γ²) 网格上的相对状态误差 |u_h - u_d|_{H²(Ω)} / |u_d|_{H²(Ω)}（∂xy 计两次）

    Args:
        p, ell, k: 次数、细化层、波数
        beta2s, gamma2s: 权重列表，行为 β²，列为 γ²
        control_space: 控制空间选择
        gamma_rect: 观测区域 Γ
        tol: 迭代精化的相对残差目标
        case: 替代算例，默认 example2_case(k)
        on_cell: 每算完一个单元格后的回调

    Returns:
        按 (β², γ²) 输入顺序排列的 ErrorReport 列表，dof 为状态空间维数
    """
    if not beta2s or not gamma2s:
        raise InvalidConfigError("β² 列表与 γ² 列表都不能为空")
    case = case or example2_case(k)
    if case.u_d is None or case.f_p is None:
        raise InvalidConfigError(f"算例 {case.name} 不含反问题数据 (u_d, f_p)")
    for beta2 in beta2s:
        for gamma2 in gamma2s:
            InverseConfig(p, ell, beta2, gamma2, k, control_space, gamma_rect).validate()

    problem = InverseProblem(p, ell, control_space, case.u_d, case.f_p, gamma_rect)
    reports: List[ErrorReport] = []
    for beta2 in beta2s:
        for gamma2 in gamma2s:
            start = time.perf_counter()
            solution = problem.solve(beta2, gamma2, tol=tol)
            params = {
                "p": p,
                "ell": ell,
                "k": k,
                "beta2": beta2,
                "gamma2": gamma2,
                "control_space": control_space.value,
            }
            report = field_error(
                solution.u_coeffs,
                problem.state_space,
                case.u_d,
                params=params,
                mixed_weight=TABLE_MIXED_WEIGHT,
                relative=True,
            )
            report.residual = solution.report.residual_norm
            report.stalled = solution.report.stalled
            report.wall_time_s = time.perf_counter() - start
            reports.append(report)
            if on_cell is not None:
                on_cell(report)
    return reports


# 稠密验证的最大细化层
SCHUR_MAX_LEVEL = 3


def schur_identity_check(
    p: int,
    ell: int,
    control_space: ControlSpace,
    seed: int = 0,
    num_random: int = 50,
    vectors: Optional[np.ndarray] = None,
) -> SchurCheck:
    """
    比较 (AᵀM_f⁻¹A u, u) 与 ‖Δu_h‖²，A 为 (Δu, g) 矩阵

    前者等于 sup_λ (Au, λ)² / (M_f λ, λ)，所以恒不超过后者；ΔU_h ⊂ F_h 时两者相等。

    Args:
        p, ell: 次数与细化层（ℓ ≤ 3，稠密计算）
        control_space: 控制空间选择
        seed: 随机向量的种子
        num_random: 在全部基向量之外追加的随机向量个数
        vectors: 给定时只检查这些列向量

    Returns:
        SchurCheck
    """
    if p < 2:
        raise InvalidConfigError(f"需要 p ≥ 2（当前 p={p}）")
    if not 0 <= ell <= SCHUR_MAX_LEVEL:
        raise InvalidConfigError(f"稠密验证要求 0 ≤ ℓ ≤ {SCHUR_MAX_LEVEL}（当前 ℓ={ell}）")

    u_space = state_space(p, ell)
    f_space = control_tensor_space(p, ell, control_space)
    laplace = laplace_gramian_2d(u_space, u_space).toarray()
    a = laplace_trial_gramian(f_space, u_space).toarray()
    m_f = mass_2d(f_space, f_space).toarray()
    schur = a.T @ cho_solve(cho_factor(m_f), a)

    if vectors is None:
        rng = np.random.default_rng(seed)
        vectors = np.hstack([np.eye(u_space.dim), rng.standard_normal((u_space.dim, num_random))])
    vectors = np.asarray(vectors, dtype=float).reshape(u_space.dim, -1)

    reduced = np.einsum("ij,ij->j", vectors, schur @ vectors)
    exact = np.einsum("ij,ij->j", vectors, laplace @ vectors)
    relative = (reduced - exact) / exact
    return SchurCheck(
        p=p,
        ell=ell,
        control_space=control_space,
        max_relative_gap=float(np.max(np.abs(relative))),
        max_excess=float(np.max(relative)),
        num_vectors=vectors.shape[1],
        is_containment=control_space == ControlSpace.REDUCED,
    )
