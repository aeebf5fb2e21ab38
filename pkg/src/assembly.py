"""
Gramian 组装

一维导数 Gramian 由逐单元 Gauss 积分精确计算，二维算子按 Kronecker 结构组合。
张量空间的全局编号为 I = i * dim_y + j，对应基函数 B_i(x) B_j(y)。
"""
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Optional, Tuple, Union

import numpy as np
import scipy.io
import scipy.sparse as sps

from .errors import MisalignedIntervalError, MisalignedSubdomainError
from .linear_solve import BandedCholesky
from .models import Rectangle, SplineSpace, TensorSpace
from .splines import (
    collocation_matrices,
    collocation_matrix,
    element_breaks,
    is_breakpoint,
    quadrature_grid,
)

DataFunction = Callable[[np.ndarray, np.ndarray], np.ndarray]


class LoadAction(str, Enum):
    """载荷向量中作用在测试函数上的线性算子"""
    IDENTITY = "identity"          # ∫_Ω φ B_i
    NEG_LAPLACE = "neg-laplace"    # ∫_Ω φ (-ΔB_i)
    BOUNDARY_TRACE = "boundary"    # ∮_∂Ω φ B_i
    SUBDOMAIN = "subdomain"        # ∫_Γ φ B_i


def gramian_1d(
    test: SplineSpace,
    trial: SplineSpace,
    a: int,
    b: int,
    interval: Tuple[float, float] = (0.0, 1.0),
    num_points: Optional[int] = None,
    dtype: Any = np.float64,
) -> sps.csr_matrix:
    """
    一维导数 Gramian G_ij = ∫_lo^hi B_i^{(a)} B_j^{(b)} dx

    Args:
        test: 测试空间（行）
        trial: 试探空间（列）
        a: 测试函数导数阶数
        b: 试探函数导数阶数
        interval: 积分区间，端点必须是两个空间的公共断点
        num_points: 每单元积分点数，默认 max(p_test, p_trial)+1（对多项式被积函数精确）
        dtype: 积分节点、基函数值与矩阵元素的浮点类型

    Returns:
        (test.dim, trial.dim) 稀疏矩阵
    """
    lo, hi = interval
    if not lo < hi:
        raise MisalignedIntervalError(f"积分区间 [{lo}, {hi}] 为空")
    for space in (test, trial):
        for end in (lo, hi):
            if not is_breakpoint(space, end):
                raise MisalignedIntervalError(f"区间端点 {end} 不是 {space} 的断点")

    n = num_points or max(test.degree, trial.degree) + 1
    points, weights = quadrature_grid(element_breaks(test, trial, lo=lo, hi=hi), n, dtype)
    bt = collocation_matrix(test, points, a)
    bs = collocation_matrix(trial, points, b)
    return sps.csr_matrix(bt.T @ sps.diags(weights) @ bs)


def _factor(
    test: TensorSpace,
    trial: TensorSpace,
    axis: int,
    a: int,
    b: int,
    interval: Tuple[float, float] = (0.0, 1.0),
    dtype: Any = np.float64,
) -> sps.csr_matrix:
    """某一方向的一维因子，按 Dirichlet 限制删去行列"""
    if axis == 0:
        g = gramian_1d(test.x_space, trial.x_space, a, b, interval, dtype=dtype)
        return g[test.keep_x][:, trial.keep_x]
    g = gramian_1d(test.y_space, trial.y_space, a, b, interval, dtype=dtype)
    return g[test.keep_y][:, trial.keep_y]


def _kron(gx: sps.spmatrix, gy: sps.spmatrix) -> sps.csr_matrix:
    return sps.kron(gx, gy, format="csr")


def mass_2d(test: TensorSpace, trial: TensorSpace, dtype: Any = np.float64) -> sps.csr_matrix:
    """(u, v)_Ω 的质量矩阵"""
    return _kron(_factor(test, trial, 0, 0, 0, dtype=dtype), _factor(test, trial, 1, 0, 0, dtype=dtype))


def laplace_gramian_2d(test: TensorSpace, trial: TensorSpace, dtype: Any = np.float64) -> sps.csr_matrix:
    """
    (Δu, Δv)_Ω 的矩阵，v 为测试函数

    G22⊗G00 + G00⊗G22 + G20⊗G02 + G02⊗G20，上标中测试导数在前。
    """
    pairs = ((0, 0), (2, 2), (2, 0), (0, 2))
    gx = {ab: _factor(test, trial, 0, *ab, dtype=dtype) for ab in pairs}
    gy = {ab: _factor(test, trial, 1, *ab, dtype=dtype) for ab in pairs}
    return sps.csr_matrix(
        _kron(gx[(2, 2)], gy[(0, 0)])
        + _kron(gx[(0, 0)], gy[(2, 2)])
        + _kron(gx[(2, 0)], gy[(0, 2)])
        + _kron(gx[(0, 2)], gy[(2, 0)])
    )


def cross_laplace_gramian(test: TensorSpace, trial: TensorSpace, dtype: Any = np.float64) -> sps.csr_matrix:
    """
    (f, Δv)_Ω 的矩阵：v ∈ U（测试，行），f ∈ F（试探，列）

    H20⊗H00 + H00⊗H20，H 为跨空间一维 Gramian。
    """
    return sps.csr_matrix(
        _kron(_factor(test, trial, 0, 2, 0, dtype=dtype), _factor(test, trial, 1, 0, 0, dtype=dtype))
        + _kron(_factor(test, trial, 0, 0, 0, dtype=dtype), _factor(test, trial, 1, 2, 0, dtype=dtype))
    )


def laplace_trial_gramian(test: TensorSpace, trial: TensorSpace, dtype: Any = np.float64) -> sps.csr_matrix:
    """(Δu, g)_Ω 的矩阵：g ∈ F（测试），u ∈ U（试探）；等于 cross_laplace_gramian(U, F) 的转置"""
    return sps.csr_matrix(
        _kron(_factor(test, trial, 0, 0, 2, dtype=dtype), _factor(test, trial, 1, 0, 0, dtype=dtype))
        + _kron(_factor(test, trial, 0, 0, 0, dtype=dtype), _factor(test, trial, 1, 0, 2, dtype=dtype))
    )


def _endpoint_values(space: SplineSpace, keep: np.ndarray, x: float, dtype: Any = np.float64) -> np.ndarray:
    return collocation_matrix(space, np.array([x], dtype=dtype)).toarray().ravel()[keep]


def boundary_mass(test: TensorSpace, trial: TensorSpace, dtype: Any = np.float64) -> sps.csr_matrix:
    """
    (u, v)_∂Ω：四条边上迹乘积积分之和

    y=0 边的贡献为 G00_x ⊗ (b(0) b(0)ᵀ)，其余边同理。
    """
    gx = _factor(test, trial, 0, 0, 0, dtype=dtype)
    gy = _factor(test, trial, 1, 0, 0, dtype=dtype)
    total = sps.csr_matrix((test.dim, trial.dim), dtype=dtype)
    for end in (0.0, 1.0):
        ty = _endpoint_values(test.y_space, test.keep_y, end, dtype)
        sy = _endpoint_values(trial.y_space, trial.keep_y, end, dtype)
        total = total + _kron(gx, sps.csr_matrix(np.outer(ty, sy)))
        tx = _endpoint_values(test.x_space, test.keep_x, end, dtype)
        sx = _endpoint_values(trial.x_space, trial.keep_x, end, dtype)
        total = total + _kron(sps.csr_matrix(np.outer(tx, sx)), gy)
    total.eliminate_zeros()
    return sps.csr_matrix(total)


def subdomain_mass(
    test: TensorSpace, trial: TensorSpace, rect: Rectangle, dtype: Any = np.float64
) -> sps.csr_matrix:
    """(u, v)_Γ = GΓ_x ⊗ GΓ_y，Γ 的角点必须落在节点线上"""
    try:
        gx = _factor(test, trial, 0, 0, 0, rect.x, dtype=dtype)
        gy = _factor(test, trial, 1, 0, 0, rect.y, dtype=dtype)
    except MisalignedIntervalError as exc:
        raise MisalignedSubdomainError(f"观测区域 Γ={rect} 未与节点对齐：{exc}") from exc
    return _kron(gx, gy)


def _broadcast(phi: DataFunction, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """φ(xs, ys) 广播到网格形状，浮点类型不低于积分点"""
    values = np.asarray(phi(xs, ys))
    dtype = np.result_type(values.dtype, np.asarray(xs).dtype, np.float64)
    return np.broadcast_to(values.astype(dtype), np.broadcast(xs, ys).shape)


def _project(bx: sps.spmatrix, by: sps.spmatrix, values: np.ndarray) -> np.ndarray:
    """bxᵀ · values · by"""
    return np.asarray(bx.T @ (by.T @ values.T).T)


def load_vector(
    test: TensorSpace,
    phi: DataFunction,
    action: LoadAction,
    rect: Optional[Rectangle] = None,
    dtype: Any = np.float64,
) -> np.ndarray:
    """
    载荷向量，逐单元 p+2 点 Gauss 积分（数据函数非多项式）

    Args:
        test: 测试空间
        phi: 向量化数据函数 φ(x, y)
        action: 作用在测试函数上的线性算子
        rect: action 为 SUBDOMAIN 时的观测区域 Γ
        dtype: 积分点与结果的浮点类型，φ 在该类型的积分点上求值

    Returns:
        长度为 test.dim 的稠密向量
    """
    n = test.degree + 2
    xs_space, ys_space = test.x_space, test.y_space

    if action == LoadAction.BOUNDARY_TRACE:
        x, wx = quadrature_grid(xs_space.breakpoints, n, dtype)
        y, wy = quadrature_grid(ys_space.breakpoints, n, dtype)
        bx = collocation_matrix(xs_space, x)
        by = collocation_matrix(ys_space, y)
        result = np.zeros(test.full_shape, dtype=dtype)
        for end in (0.0, 1.0):
            # 水平边 y = end
            gx = bx.T @ (wx * _broadcast(phi, x, np.full_like(x, end)))
            result += np.outer(gx, _endpoint_values(ys_space, np.arange(ys_space.dim), end, dtype))
            # 竖直边 x = end
            gy = by.T @ (wy * _broadcast(phi, np.full_like(y, end), y))
            result += np.outer(_endpoint_values(xs_space, np.arange(xs_space.dim), end, dtype), gy)
        return result[np.ix_(test.keep_x, test.keep_y)].ravel()

    region = rect if action == LoadAction.SUBDOMAIN else Rectangle.unit()
    if region is None:
        raise MisalignedSubdomainError("SUBDOMAIN 载荷需要给出观测区域 Γ")
    for space, (lo, hi) in ((xs_space, region.x), (ys_space, region.y)):
        if not (is_breakpoint(space, lo) and is_breakpoint(space, hi)):
            raise MisalignedSubdomainError(f"观测区域 Γ={region} 未与 {space} 的节点对齐")

    x, wx = quadrature_grid(element_breaks(xs_space, lo=region.x[0], hi=region.x[1]), n, dtype)
    y, wy = quadrature_grid(element_breaks(ys_space, lo=region.y[0], hi=region.y[1]), n, dtype)
    weighted = np.outer(wx, wy) * _broadcast(phi, x[:, None], y[None, :])
    bx = collocation_matrices(xs_space, x, 2)
    by = collocation_matrices(ys_space, y, 2)

    if action == LoadAction.NEG_LAPLACE:
        result = -(_project(bx[2], by[0], weighted) + _project(bx[0], by[2], weighted))
    else:
        result = _project(bx[0], by[0], weighted)
    return result[np.ix_(test.keep_x, test.keep_y)].ravel()


def export_matrix_market(path: Union[str, Path], matrix: sps.spmatrix) -> Path:
    """以 `%%MatrixMarket matrix coordinate real general` 格式导出矩阵（调试用）"""
    path = Path(path)
    if path.suffix != ".mtx":
        path = path.with_suffix(".mtx")
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy.io.mmwrite(str(path), sps.coo_matrix(matrix).astype(np.float64), field="real", symmetry="general")
    return path


def project_l2(space: TensorSpace, phi: DataFunction) -> np.ndarray:
    """L² 投影系数：M c = (φ, B_i)_Ω"""
    return BandedCholesky(mass_2d(space, space)).solve(load_vector(space, phi, LoadAction.IDENTITY))
