"""
B 样条空间、基函数求值与 Gauss-Legendre 积分
"""
from typing import Any, Callable, List, Tuple

import numpy as np
import scipy.sparse as sps

from .errors import (
    InvalidContinuityError,
    InvalidDegreeError,
    OutOfDomainError,
    UnsupportedOrderError,
)
from .models import KnotVector, QuadratureRule, SplineSpace, TensorSpace

# 断点比较容差
BREAK_TOL = 1e-12

# 扩展精度组装与残差计算使用的浮点类型
EXTENDED = np.longdouble


def make_space(p: int, ell: int, q: int) -> SplineSpace:
    """
    构造 [0,1] 上的一致二进网格样条空间 S_{p,ℓ,q}

    内部断点 j·2^{-ℓ} 的重数取 p-q，从而在每个断点处 C^q 连续。

    Args:
        p: 样条次数（≥ 1）
        ell: 细化层数，单元数为 2^ℓ
        q: 连续性，-1 表示间断

    Returns:
        SplineSpace
    """
    if p < 1:
        raise InvalidDegreeError(f"样条次数 p 必须 ≥ 1（当前 p={p}）")
    if not -1 <= q <= p - 1:
        raise InvalidContinuityError(f"连续性 q 必须在 [-1, {p - 1}] 内（当前 q={q}）")
    if ell < 0:
        raise InvalidDegreeError(f"细化层数 ℓ 必须 ≥ 0（当前 ℓ={ell}）")

    num_elements = 2 ** ell
    breakpoints = tuple(j / num_elements for j in range(num_elements + 1))
    multiplicities = tuple([p - q] * (num_elements - 1))
    return SplineSpace(KnotVector(p, breakpoints, multiplicities), level=ell, continuity=q)


def _float_dtype(values: Any) -> Any:
    """values 的浮点标量类型，整数与 float32 提升为 float64"""
    return np.result_type(np.asarray(values).dtype, np.float64).type


def find_span(space: SplineSpace, x: float) -> int:
    """
    查找 x 所在的节点区间下标 s，满足 knots[s] ≤ x < knots[s+1]

    断点处取右极限，x = 1 处取左极限。
    """
    knots = space.knots
    span = int(np.searchsorted(knots, x, side="right")) - 1
    return min(max(span, space.degree), space.dim - 1)


def _basis_funs_all_ders(
    knots: np.ndarray, p: int, x: float, span: int, n: int, dtype: Any = np.float64
) -> np.ndarray:
    """
    计算 span 上 p+1 个非零基函数在 x 处的 0..n 阶导数

    标准 Cox-de Boor 三角表加节点差分求导公式，ders[k, r] 为第 span-p+r 个基函数的 k 阶导数。
    全部中间量按 dtype 计算。
    """
    knots = knots.astype(dtype)
    ndu = np.zeros((p + 1, p + 1), dtype=dtype)
    ndu[0, 0] = 1.0
    left = np.zeros(p + 1, dtype=dtype)
    right = np.zeros(p + 1, dtype=dtype)
    for j in range(1, p + 1):
        left[j] = x - knots[span + 1 - j]
        right[j] = knots[span + j] - x
        saved = 0.0
        for r in range(j):
            # 下三角存节点差
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r]
            # 上三角存基函数值
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((n + 1, p + 1), dtype=dtype)
    ders[0, :] = ndu[:, p]

    a = np.zeros((2, p + 1), dtype=dtype)
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, n + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk]
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / ndu[pk + 1, rk + j]
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                a[s2, k] = -a[s1, k - 1] / ndu[pk + 1, r]
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1

    factor = p
    for k in range(1, n + 1):
        ders[k, :] *= factor
        factor *= p - k
    return ders


def eval_basis_all(space: SplineSpace, x: float, nders: int) -> Tuple[int, np.ndarray]:
    """
    返回 (首个非零基函数下标, 0..nders 阶导数表)

    超过次数 p 的导数恒为零。x 为 np.longdouble 时按扩展精度计算。
    """
    if not (0.0 <= x <= 1.0):
        raise OutOfDomainError(f"求值点 x={x} 不在 [0, 1] 内")
    dtype = _float_dtype(x)
    p = space.degree
    span = find_span(space, x)
    computed = _basis_funs_all_ders(space.knots, p, dtype(x), span, min(nders, p), dtype)
    if nders > p:
        computed = np.vstack([computed, np.zeros((nders - p, p + 1), dtype=dtype)])
    return span - p, computed


def eval_basis(space: SplineSpace, x: float, d: int = 0) -> Tuple[int, np.ndarray]:
    """
    计算 x 处所有非零基函数的 d 阶导数

    Args:
        space: 样条空间
        x: 求值点，[0,1] 内
        d: 导数阶数 0..2

    Returns:
        (first_index, values)，values 长度为 p+1，其余基函数在 x 处为零
    """
    first, ders = eval_basis_all(space, x, d)
    return first, ders[d].copy()


def collocation_matrices(space: SplineSpace, points: np.ndarray, nders: int) -> List[sps.csr_matrix]:
    """
    配点矩阵 B^{(d)}[a, i] = B_i^{(d)}(points[a])，d = 0..nders

    一次遍历算出全部导数阶，矩阵元素的浮点类型跟随 points。
    """
    dtype = _float_dtype(points)
    points = np.asarray(points, dtype=dtype).ravel()
    p = space.degree
    npts = len(points)
    rows = np.repeat(np.arange(npts), p + 1)
    cols = np.empty(npts * (p + 1), dtype=int)
    values = np.empty((nders + 1, npts * (p + 1)), dtype=dtype)
    for a, x in enumerate(points):
        first, ders = eval_basis_all(space, x, nders)
        sl = slice(a * (p + 1), (a + 1) * (p + 1))
        cols[sl] = np.arange(first, first + p + 1)
        values[:, sl] = ders
    shape = (npts, space.dim)
    return [sps.csr_matrix((values[d], (rows, cols)), shape=shape) for d in range(nders + 1)]


def collocation_matrix(space: SplineSpace, points: np.ndarray, d: int = 0) -> sps.csr_matrix:
    return collocation_matrices(space, points, d)[d]


def _legendre(x: np.ndarray, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """三项递推求 P_n(x) 与 P_n'(x)"""
    prev, cur = np.ones_like(x), x.copy()
    for k in range(2, n + 1):
        prev, cur = cur, ((2 * k - 1) * x * cur - (k - 1) * prev) / k
    return cur, n * (x * cur - prev) / (x * x - 1)


def gauss_rule(n: int, dtype: Any = np.float64) -> QuadratureRule:
    """
    n 点 Gauss-Legendre 积分规则，代数精度 2n-1

    Args:
        n: 积分点数 1..16
        dtype: 节点与权重的浮点类型；非 float64 时以 leggauss 结果为初值做 Newton 迭代
    """
    if not 1 <= n <= 16:
        raise UnsupportedOrderError(f"Gauss 积分点数必须在 1..16 内（当前 n={n}）")
    nodes, weights = np.polynomial.legendre.leggauss(n)
    if np.dtype(dtype) != np.float64:
        nodes = nodes.astype(dtype)
        for _ in range(3):
            value, slope = _legendre(nodes, n)
            nodes = nodes - value / slope
        _, slope = _legendre(nodes, n)
        weights = 2 / ((1 - nodes * nodes) * slope * slope)
    return QuadratureRule(tuple(nodes), tuple(weights))


def element_breaks(*spaces: SplineSpace, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """若干空间断点的并集，限制在 [lo, hi] 上"""
    merged = np.unique(np.concatenate([s.breakpoints for s in spaces]))
    inside = merged[(merged >= lo - BREAK_TOL) & (merged <= hi + BREAK_TOL)]
    # 合并数值上重合的断点
    keep = np.concatenate([[True], np.diff(inside) > BREAK_TOL])
    return inside[keep]


def quadrature_grid(breaks: np.ndarray, n: int, dtype: Any = np.float64) -> Tuple[np.ndarray, np.ndarray]:
    """逐单元 n 点 Gauss 积分：返回拼接后的积分点与权重"""
    rule = gauss_rule(n, dtype)
    points = []
    weights = []
    for a, b in zip(breaks[:-1], breaks[1:]):
        x, w = rule.mapped(a, b)
        points.append(x)
        weights.append(w)
    return np.concatenate(points), np.concatenate(weights)


def is_breakpoint(space: SplineSpace, x: float) -> bool:
    return bool(np.any(np.abs(space.breakpoints - x) <= BREAK_TOL))


def greville_points(space: SplineSpace) -> np.ndarray:
    """Greville 点：相邻 p 个节点的平均"""
    knots = space.knots
    p = space.degree
    return np.array([knots[i + 1:i + p + 1].mean() for i in range(space.dim)])


def _greville_collocation(space: SplineSpace) -> np.ndarray:
    if space.continuity < 0:
        raise InvalidContinuityError(f"{space} 为间断空间，Greville 点重合，无法配点插值")
    return collocation_matrix(space, greville_points(space)).toarray()


def interpolate(space: SplineSpace, func: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """在 Greville 点配点插值，返回系数"""
    colloc = _greville_collocation(space)
    return np.linalg.solve(colloc, func(greville_points(space)))


def interpolate_2d(tspace: TensorSpace, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """
    张量积 Greville 插值

    Dirichlet 空间只返回内部系数（调用者保证 func 在边界上为零）。
    """
    gx = greville_points(tspace.x_space)
    gy = greville_points(tspace.y_space)
    values = np.broadcast_to(func(gx[:, None], gy[None, :]), (len(gx), len(gy)))
    cx = _greville_collocation(tspace.x_space)
    cy = _greville_collocation(tspace.y_space)
    coeffs = np.linalg.solve(cy, np.linalg.solve(cx, values).T).T
    return coeffs[np.ix_(tspace.keep_x, tspace.keep_y)].ravel()


def expand_coefficients(tspace: TensorSpace, coeffs: np.ndarray) -> np.ndarray:
    """把（可能受限的）系数向量展开成完整的 (dim_x, dim_y) 系数网格，边界补零"""
    full = np.zeros(tspace.full_shape)
    full[np.ix_(tspace.keep_x, tspace.keep_y)] = np.asarray(coeffs).reshape(tspace.shape)
    return full


def evaluate_field(
    tspace: TensorSpace, coeffs: np.ndarray, xs: np.ndarray, ys: np.ndarray, dx: int = 0, dy: int = 0
) -> np.ndarray:
    """
    在张量网格 xs × ys 上求离散场的偏导数 ∂x^dx ∂y^dy u_h

    Returns:
        形状 (len(xs), len(ys)) 的数组
    """
    grid = expand_coefficients(tspace, coeffs)
    bx = collocation_matrix(tspace.x_space, np.atleast_1d(xs), dx)
    by = collocation_matrix(tspace.y_space, np.atleast_1d(ys), dy)
    return np.asarray(bx @ (by @ grid.T).T)
