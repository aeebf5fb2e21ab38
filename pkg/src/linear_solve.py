"""
对称正定稀疏系统求解

对称 Jacobi 缩放 + 逆 Cuthill-McKee 重排 + 带状 Cholesky（双精度），
迭代精化的残差按 np.longdouble 计算。
"""
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.sparse as sps
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cho_solve_banded, cholesky_banded
from scipy.sparse.csgraph import connected_components, reverse_cuthill_mckee
from scipy.sparse.linalg import LinearOperator, onenormest

from .errors import NotBlockDiagonalError, NotPositiveDefiniteError
from .models import SolveReport, SparseSymmetricSystem
from .splines import EXTENDED

DEFAULT_TOL = 1e-10
DEFAULT_MAX_REFINE = 10

# 修正量相对解的大小降到双精度舍入水平即停止精化
STEP_TOL = float(np.finfo(np.float64).eps)

ApproximateSolve = Callable[[np.ndarray], np.ndarray]


class BandedCholesky:
    """缩放、重排后的带状 Cholesky 分解，solve 作用于原始（未缩放）系统"""

    def __init__(self, matrix: sps.spmatrix, equilibrate: bool = True):
        matrix = sps.csr_matrix(matrix).astype(np.float64)
        self.n = matrix.shape[0]
        diag = matrix.diagonal()
        if np.any(diag <= 0):
            bad = int(np.flatnonzero(diag <= 0)[0])
            raise NotPositiveDefiniteError(f"第 {bad} 个对角元 {diag[bad]:.3e} 非正，矩阵不是正定的")

        self.scale = 1.0 / np.sqrt(diag) if equilibrate else np.ones(self.n)
        scaling = sps.diags(self.scale)
        self.scaled = sps.csr_matrix(scaling @ matrix @ scaling)
        self.perm = reverse_cuthill_mckee(self.scaled, symmetric_mode=True)

        permuted = self.scaled[self.perm][:, self.perm].tocoo()
        permuted.sum_duplicates()
        lower = permuted.row >= permuted.col
        rows, cols, vals = permuted.row[lower], permuted.col[lower], permuted.data[lower]
        self.bandwidth = int((rows - cols).max()) if len(rows) else 0

        banded = np.zeros((self.bandwidth + 1, self.n))
        banded[rows - cols, cols] = vals
        try:
            self.factor = cholesky_banded(banded, lower=True)
        except LinAlgError as exc:
            raise NotPositiveDefiniteError(f"Cholesky 分解遇到非正主元：{exc}") from exc

    def _solve_scaled(self, rhs: np.ndarray) -> np.ndarray:
        z = cho_solve_banded((self.factor, True), np.asarray(rhs, dtype=np.float64)[self.perm])
        out = np.empty_like(z)
        out[self.perm] = z
        return out

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """求解 A x = rhs（双精度）"""
        rhs = np.asarray(rhs, dtype=np.float64)
        return self.scale * self._solve_scaled(self.scale * rhs)

    def condition_estimate(self) -> float:
        """缩放后矩阵的 1-范数条件数估计（仅作诊断）"""
        if self.n == 0:
            return 1.0
        inverse = LinearOperator(
            (self.n, self.n), matvec=self._solve_scaled, rmatvec=self._solve_scaled, dtype=float
        )
        return float(onenormest(self.scaled) * onenormest(inverse))


def _backward_error(matrix: sps.csr_matrix, x: np.ndarray, rhs: np.ndarray, residual: np.ndarray) -> float:
    """范数意义下的后向误差 ‖r‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)"""
    matrix_norm = float(abs(matrix).sum(axis=1).max())
    scale = matrix_norm * float(np.abs(x).max()) + float(np.abs(rhs).max())
    return float(np.abs(residual).max()) / scale if scale > 0 else 0.0


def refine_solution(
    system: SparseSymmetricSystem,
    approximate_solve: ApproximateSolve,
    condition: float = 1.0,
    tol: float = DEFAULT_TOL,
    max_refine: int = DEFAULT_MAX_REFINE,
) -> Tuple[np.ndarray, SolveReport]:
    """
    以双精度近似逆 S 做迭代精化 x ← x + S(b - Ax)，残差按扩展精度计算

    残差达到 tol 后继续精化，直到修正量降到双精度舍入水平或不再减半；
    小权重（如 α² = 1e-6）控制的近零空间分量对残差范数几乎没有贡献，只能靠修正量判断收敛。

    Args:
        system: 对称系统（矩阵与右端可以是 np.longdouble）
        approximate_solve: 双精度近似求解，例如 Cholesky 回代或凝聚求解
        condition: 写入报告的条件数估计
        tol: 相对残差目标
        max_refine: 最多精化步数

    Returns:
        (解向量, SolveReport)。解的浮点类型与系统一致；报告中的残差是返回前扩展精度迭代值的残差。
        max_refine 步后 ‖Ax-b‖₂ > tol·‖b‖₂ 时 report.stalled 为 True；
        此时返回最后的迭代值，比最小残差大一倍以上时改为返回残差最小的迭代值。
        返回值的残差不超过初始残差
    """
    out_dtype = np.result_type(system.lower.dtype, system.rhs.dtype, np.float64)
    matrix = system.matrix.astype(EXTENDED)
    rhs = np.asarray(system.rhs, dtype=EXTENDED)

    rhs_norm = float(np.linalg.norm(rhs))
    if rhs_norm == 0.0:
        return np.zeros(system.n, dtype=out_dtype), SolveReport(0.0, 0, condition)

    def residual_of(x: np.ndarray) -> Tuple[np.ndarray, float]:
        r = rhs - matrix @ x
        return r, float(np.linalg.norm(r)) / rhs_norm

    x = approximate_solve(rhs).astype(EXTENDED)
    residual, res = residual_of(x)
    initial = res
    best = (x, residual, res)

    steps = 0
    previous = np.inf
    while steps < max_refine:
        correction = approximate_solve(residual)
        x = x + correction
        residual, res = residual_of(x)
        steps += 1
        if res < best[2]:
            best = (x, residual, res)
        size = float(np.linalg.norm(correction)) / max(float(np.linalg.norm(x)), np.finfo(float).tiny)
        if res <= tol and (size <= STEP_TOL or size > 0.5 * previous):
            break
        previous = size

    if res > initial or (res > tol and res > 2.0 * best[2]):
        x, residual, res = best
    report = SolveReport(
        residual_norm=res,
        refinement_steps=steps,
        condition_estimate=condition,
        initial_residual=initial,
        backward_error=_backward_error(matrix, x, rhs, residual),
        stalled=res > tol,
    )
    return x.astype(out_dtype), report


def factor_and_solve(
    system: SparseSymmetricSystem,
    tol: float = DEFAULT_TOL,
    max_refine: int = DEFAULT_MAX_REFINE,
    equilibrate: bool = True,
) -> Tuple[np.ndarray, SolveReport]:
    """
    双精度分解并迭代精化，直到 ‖Ax-b‖₂ ≤ tol·‖b‖₂ 且修正量收敛

    Args:
        system: 对称系统
        tol: 相对残差目标
        max_refine: 最多精化步数
        equilibrate: 分解前是否做对称 Jacobi 缩放

    Returns:
        (解向量, SolveReport)，见 refine_solution
    """
    chol = BandedCholesky(system.matrix, equilibrate=equilibrate)
    return refine_solution(system, chol.solve, chol.condition_estimate(), tol, max_refine)


def _element_blocks(matrix: sps.spmatrix, block_size: Optional[int]) -> List[np.ndarray]:
    """按稀疏图连通分量划分对角块，块大小超过 block_size 说明存在单元间耦合"""
    pattern = sps.csr_matrix(matrix)
    pattern.eliminate_zeros()
    num_blocks, labels = connected_components(pattern, directed=False)
    sizes = np.bincount(labels, minlength=num_blocks)
    limit = block_size if block_size is not None else pattern.shape[0] - 1
    if pattern.shape[0] > 1 and sizes.max() > max(limit, 1):
        raise NotBlockDiagonalError(
            f"质量矩阵存在大小为 {sizes.max()} 的耦合块（允许的单元块大小为 {limit}）"
        )
    order = np.argsort(labels, kind="stable")
    return np.split(order, np.cumsum(sizes)[:-1])


def block_diagonal_inverse(matrix: sps.spmatrix, block_size: Optional[int] = None) -> sps.csr_matrix:
    """逐块求逆单元块对角矩阵（间断控制空间的质量矩阵）"""
    matrix = sps.csr_matrix(matrix).astype(np.float64)
    rows, cols, vals = [], [], []
    for idx in _element_blocks(matrix, block_size):
        block = matrix[idx][:, idx].toarray()
        inv = cho_solve(cho_factor(block), np.eye(len(idx)))
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(inv.ravel())
    return sps.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=matrix.shape
    )


class BlockCondensation:
    """
    静态凝聚控制变量

    原系统 [[M_Γ + γ²L, γ²C], [γ²Cᵀ, (β²+γ²)M_f]] [u; f] = [rhs_u; rhs_f]，
    消去 f 得 (M_Γ + γ²L - γ⁴/(β²+γ²) C M_f⁻¹ Cᵀ) u = rhs_u - γ²/(β²+γ²) C M_f⁻¹ rhs_f。
    其中 γ²L - γ⁴/(β²+γ²)K 按 γ²(L - K) + γ²β²/(β²+γ²) K 计算（K = C M_f⁻¹ Cᵀ），
    包含条件成立时 L - K 只剩舍入误差，避免大 γ² 下的相消。全部按双精度计算。
    """

    def __init__(
        self,
        m_f: sps.spmatrix,
        coupling: sps.spmatrix,
        observation: sps.spmatrix,
        laplace: sps.spmatrix,
        beta2: float,
        gamma2: float,
        block_size: Optional[int] = None,
    ):
        self.m_inv = block_diagonal_inverse(m_f, block_size)
        self.coupling = sps.csr_matrix(coupling).astype(np.float64)
        self.gamma2 = gamma2
        self.weight = beta2 + gamma2
        schur = sps.csr_matrix(self.coupling @ self.m_inv @ self.coupling.T)
        self.matrix = sps.csr_matrix(
            sps.csr_matrix(observation).astype(np.float64)
            + gamma2 * (sps.csr_matrix(laplace).astype(np.float64) - schur)
            + (gamma2 * beta2 / self.weight) * schur
        )

    @property
    def num_state(self) -> int:
        return self.matrix.shape[0]

    def reduce(self, rhs_u: np.ndarray, rhs_f: np.ndarray) -> np.ndarray:
        rhs_u = np.asarray(rhs_u, dtype=np.float64)
        rhs_f = np.asarray(rhs_f, dtype=np.float64)
        return rhs_u - (self.gamma2 / self.weight) * (self.coupling @ (self.m_inv @ rhs_f))

    def expand(self, u: np.ndarray, rhs_f: np.ndarray) -> np.ndarray:
        """由 u 回代 f = M_f⁻¹(rhs_f - γ²Cᵀu) / (β²+γ²)"""
        u = np.asarray(u, dtype=np.float64)
        rhs_f = np.asarray(rhs_f, dtype=np.float64)
        return self.m_inv @ (rhs_f - self.gamma2 * (self.coupling.T @ u)) / self.weight

    def system(self, rhs_u: np.ndarray, rhs_f: np.ndarray) -> SparseSymmetricSystem:
        return SparseSymmetricSystem.from_matrix(self.matrix, self.reduce(rhs_u, rhs_f))

    def block_solver(self, chol: BandedCholesky) -> ApproximateSolve:
        """整体块系统的近似逆：凝聚右端、用 chol 求 u、回代 f"""
        n = self.num_state

        def solve(rhs: np.ndarray) -> np.ndarray:
            rhs_u, rhs_f = rhs[:n], rhs[n:]
            u = chol.solve(self.reduce(rhs_u, rhs_f))
            return np.concatenate([u, self.expand(u, rhs_f)])

        return solve


def block_condense(
    m_f: sps.spmatrix,
    coupling: sps.spmatrix,
    observation: sps.spmatrix,
    laplace: sps.spmatrix,
    beta2: float,
    gamma2: float,
    rhs_u: np.ndarray,
    rhs_f: np.ndarray,
    block_size: Optional[int] = None,
) -> Tuple[SparseSymmetricSystem, Callable[[np.ndarray], np.ndarray]]:
    """
    关于 u 的凝聚系统与回代函数

    Args:
        m_f: 控制空间质量矩阵（单元块对角）
        coupling: C，(f, Δv) 矩阵，行对应状态空间
        observation: M_Γ
        laplace: L
        beta2, gamma2: 权重
        rhs_u, rhs_f: 两个方程块的右端（rhs_f 已含 β² 因子）
        block_size: 单元块大小 (p+1)²

    Returns:
        (关于 u 的凝聚系统, 由 u 回代 f 的函数)

    Raises:
        NotBlockDiagonalError: m_f 存在单元间耦合
    """
    condensation = BlockCondensation(m_f, coupling, observation, laplace, beta2, gamma2, block_size)
    return condensation.system(rhs_u, rhs_f), lambda u: condensation.expand(u, rhs_f)
