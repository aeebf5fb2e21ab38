#!/usr/bin/env python3
"""
测试 Gramian 与载荷向量组装
"""
import numpy as np
import pytest
import scipy.io
from rich import print

from src.assembly import (
    LoadAction,
    boundary_mass,
    cross_laplace_gramian,
    export_matrix_market,
    gramian_1d,
    laplace_gramian_2d,
    laplace_trial_gramian,
    load_vector,
    mass_2d,
    project_l2,
    subdomain_mass,
)
from src.errors import MisalignedIntervalError, MisalignedSubdomainError
from src.models import Rectangle, TensorSpace
from src.splines import (
    EXTENDED,
    collocation_matrix,
    element_breaks,
    evaluate_field,
    interpolate_2d,
    make_space,
    quadrature_grid,
)


def _tensor(p: int, ell: int, q: int, dirichlet: bool = False) -> TensorSpace:
    space = make_space(p, ell, q)
    return TensorSpace(space, space, dirichlet=dirichlet)


def _quadratic(x, y):
    return x * (1 - x) + y * (1 - y)


def test_gramian_1d_against_dense_quadrature():
    """测试默认积分阶与高阶积分一致"""
    for (p, q_test), (p2, q_trial) in [((2, 1), (2, 1)), ((2, 1), (2, -1)), ((3, 2), (3, 0))]:
        test = make_space(p, 2, q_test)
        trial = make_space(p2, 2, q_trial)
        for a in range(3):
            for b in range(3):
                exact = gramian_1d(test, trial, a, b).toarray()
                oracle = gramian_1d(test, trial, a, b, num_points=12).toarray()
                scale = max(np.abs(oracle).max(), 1.0)
                assert np.abs(exact - oracle).max() <= 1e-10 * scale
    print("[green]一维 Gramian 与高阶积分一致[/green]")


def test_gramian_1d_identities():
    """测试质量矩阵总和为区间长度、常数函数导数为零"""
    space = make_space(2, 3, 1)
    mass = gramian_1d(space, space, 0, 0)
    ones = np.ones(space.dim)
    assert abs(ones @ mass @ ones - 1.0) < 1e-14
    assert np.abs(mass - mass.T).max() < 1e-15
    stiffness = gramian_1d(space, space, 1, 1)
    assert np.abs(stiffness @ ones).max() < 1e-12
    sub = gramian_1d(space, space, 0, 0, interval=(0.25, 0.75))
    assert abs(ones @ sub @ ones - 0.5) < 1e-14


def test_gramian_1d_misaligned_interval():
    space = make_space(2, 1, 1)
    with pytest.raises(MisalignedIntervalError):
        gramian_1d(space, space, 0, 0, interval=(0.25, 0.75))
    with pytest.raises(MisalignedIntervalError):
        gramian_1d(space, space, 0, 0, interval=(0.5, 0.5))


def test_laplace_gramian_on_quadratic():
    """测试 uᵀLu = ‖Δu‖² 对 u = x(1-x)+y(1-y)，Δu ≡ -4"""
    space = _tensor(2, 2, 1)
    laplace = laplace_gramian_2d(space, space)
    coeffs = interpolate_2d(space, _quadratic)
    value = coeffs @ laplace @ coeffs
    print(f"[cyan]uᵀLu[/cyan] = {value:.15f}（期望 16）")
    assert abs(value - 16.0) < 1e-11
    assert np.abs(laplace - laplace.T).max() < 1e-11
    assert np.abs(laplace @ np.ones(space.dim)).max() < 1e-10


def test_laplace_gramian_dirichlet_positive_definite():
    space = _tensor(2, 2, 1, dirichlet=True)
    laplace = laplace_gramian_2d(space, space).toarray()
    assert laplace.shape == (16, 16)
    assert np.linalg.eigvalsh(laplace).min() > 0


def test_boundary_and_subdomain_mass():
    """测试边界质量与子区域质量的总和"""
    space = _tensor(2, 2, 1)
    ones = np.ones(space.dim)
    boundary = boundary_mass(space, space)
    assert abs(ones @ boundary @ ones - 4.0) < 1e-13

    coeffs = interpolate_2d(space, _quadratic)
    # u 在 y=0 与 y=1 边上为 x(1-x)，在 x=0 与 x=1 边上为 y(1-y)：∫ = 4 · 1/30
    assert abs(coeffs @ boundary @ coeffs - 4.0 / 30.0) < 1e-13

    gamma = subdomain_mass(space, space, Rectangle.square(0.25, 0.75))
    assert abs(ones @ gamma @ ones - 0.25) < 1e-14
    assert abs(ones @ mass_2d(space, space) @ ones - 1.0) < 1e-14


def test_subdomain_misaligned():
    space = _tensor(2, 1, 1)
    with pytest.raises(MisalignedSubdomainError):
        subdomain_mass(space, space, Rectangle.square(0.25, 0.75))
    with pytest.raises(MisalignedSubdomainError):
        load_vector(space, _quadratic, LoadAction.SUBDOMAIN, Rectangle.square(0.25, 0.75))


def test_cross_gramian_transpose():
    """测试 (f, Δv) 矩阵与 (Δu, g) 矩阵互为转置"""
    u_space = _tensor(2, 2, 1, dirichlet=True)
    for q in (1, -1):
        f_space = _tensor(2, 2, q)
        cross = cross_laplace_gramian(u_space, f_space)
        trial = laplace_trial_gramian(f_space, u_space)
        assert cross.shape == (u_space.dim, f_space.dim)
        assert np.abs(cross - trial.T).max() < 1e-13


def test_cross_gramian_against_laplacian():
    """对 u = x(1-x)y(1-y)，(1, Δu)_Ω = -2/3"""
    u_space = _tensor(2, 2, 1, dirichlet=True)
    f_space = _tensor(2, 2, -1)
    coeffs = interpolate_2d(u_space, lambda x, y: x * (1 - x) * y * (1 - y))
    ones = np.ones(f_space.dim)
    value = coeffs @ cross_laplace_gramian(u_space, f_space) @ ones
    # ∫ Δu = ∫ -2y(1-y) - 2x(1-x) = -2/3
    assert abs(value + 2.0 / 3.0) < 1e-13


def test_load_vectors():
    """测试常数数据的载荷向量总和"""
    space = _tensor(2, 2, 1)
    one = lambda x, y: np.ones(np.broadcast(x, y).shape)  # noqa: E731
    assert abs(load_vector(space, one, LoadAction.IDENTITY).sum() - 1.0) < 1e-14
    assert abs(load_vector(space, one, LoadAction.BOUNDARY_TRACE).sum() - 4.0) < 1e-14
    assert abs(load_vector(space, one, LoadAction.NEG_LAPLACE).sum()) < 1e-11
    rect = Rectangle.square(0.25, 0.75)
    assert abs(load_vector(space, one, LoadAction.SUBDOMAIN, rect).sum() - 0.25) < 1e-14


def test_load_vector_matches_mass():
    """多项式数据：载荷向量等于质量矩阵乘插值系数"""
    space = _tensor(2, 2, 1)
    coeffs = interpolate_2d(space, _quadratic)
    assert np.allclose(load_vector(space, _quadratic, LoadAction.IDENTITY),
                       mass_2d(space, space) @ coeffs, atol=1e-14)
    assert np.allclose(load_vector(space, _quadratic, LoadAction.BOUNDARY_TRACE),
                       boundary_mass(space, space) @ coeffs, atol=1e-14)
    # f = -Δu = 4 时 (f, -ΔB_i) = (Δu, ΔB_i)
    laplace_rhs = load_vector(space, lambda x, y: np.full(np.broadcast(x, y).shape, 4.0),
                              LoadAction.NEG_LAPLACE)
    assert np.allclose(laplace_rhs, laplace_gramian_2d(space, space) @ coeffs, atol=1e-11)


def test_dirichlet_load_restriction():
    space = _tensor(2, 2, 1, dirichlet=True)
    values = load_vector(space, _quadratic, LoadAction.IDENTITY)
    assert values.shape == (space.dim,)


def test_project_l2_reproduces_polynomials():
    space = _tensor(2, 2, -1)
    full = _tensor(2, 2, 1)
    projected = project_l2(space, _quadratic)
    interpolant = interpolate_2d(full, _quadratic)
    # 两个空间中同一函数的 L² 距离为零
    mass_cross = mass_2d(space, full)
    m_f = mass_2d(space, space)
    diff = m_f @ projected - mass_cross @ interpolant
    assert np.abs(diff).max() < 1e-13


def test_export_matrix_market(tmp_path):
    space = _tensor(2, 1, 1)
    matrix = mass_2d(space, space)
    path = export_matrix_market(tmp_path / "mass", matrix)
    print(f"[green]导出至:[/green] {path}")
    assert path.suffix == ".mtx"
    header = path.read_text().splitlines()[0]
    assert header.startswith("%%MatrixMarket matrix coordinate real general")
    loaded = scipy.io.mmread(str(path))
    assert np.abs(loaded.toarray() - matrix.toarray()).max() < 1e-15


def _grid(space: TensorSpace, lo: float = 0.0, hi: float = 1.0, n: int = 16):
    """逐单元 n×n Gauss 点的稠密积分网格"""
    x, wx = quadrature_grid(element_breaks(space.x_space, lo=lo, hi=hi), n)
    y, wy = quadrature_grid(element_breaks(space.y_space, lo=lo, hi=hi), n)
    return x, wx, y, wy


def _integrate(values: np.ndarray, wx: np.ndarray, wy: np.ndarray) -> float:
    return float(wx @ values @ wy)


def test_linear_element_mass():
    """S_{1,0,0}：单元上两个帽函数的质量矩阵"""
    space = make_space(1, 0, 0)
    mass = gramian_1d(space, space, 0, 0).toarray()
    assert mass.shape == (2, 2)
    assert np.abs(mass - np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])).max() <= 1e-15


def test_gramian_1d_against_simpson():
    """S_{2,3,1} 的二阶导数 Gramian 与逐单元复合 Simpson 积分一致"""
    space = make_space(2, 3, 1)
    panels = 1000
    oracle = np.zeros((space.dim, space.dim))
    for lo, hi in zip(space.breakpoints[:-1], space.breakpoints[1:]):
        x = np.linspace(lo, hi, 2 * panels + 1)
        # 端点向单元内收缩，取本单元一侧的导数
        x[0], x[-1] = lo + 1e-13, hi - 1e-13
        w = np.ones_like(x)
        w[1:-1:2], w[2:-1:2] = 4.0, 2.0
        w *= (hi - lo) / (6 * panels)
        values = collocation_matrix(space, x, 2).toarray()
        oracle += values.T @ (w[:, None] * values)
    exact = gramian_1d(space, space, 2, 2).toarray()
    assert np.abs(exact - oracle).max() <= 1e-8 * np.abs(oracle).max()


def test_laplace_gramian_against_dense_quadrature():
    """随机系数：uᵀLu 等于逐单元 16×16 Gauss 点积分的 ‖Δu‖²"""
    rng = np.random.default_rng(0)
    space = _tensor(2, 2, 1)
    x, wx, y, wy = _grid(space)
    laplace = laplace_gramian_2d(space, space)
    for _ in range(3):
        coeffs = rng.standard_normal(space.dim)
        lap = evaluate_field(space, coeffs, x, y, 2, 0) + evaluate_field(space, coeffs, x, y, 0, 2)
        oracle = _integrate(lap ** 2, wx, wy)
        assert abs(coeffs @ laplace @ coeffs - oracle) <= 1e-10 * oracle


def test_cross_gramian_against_dense_quadrature():
    """随机 f ∈ F_h、v ∈ U_h：vᵀCf 等于 ∫ f Δv"""
    rng = np.random.default_rng(1)
    u_space = _tensor(2, 2, 1, dirichlet=True)
    for q in (1, -1):
        f_space = _tensor(2, 2, q)
        x, wx, y, wy = _grid(f_space)
        cross = cross_laplace_gramian(u_space, f_space)
        v = rng.standard_normal(u_space.dim)
        g = rng.standard_normal(f_space.dim)
        lap = evaluate_field(u_space, v, x, y, 2, 0) + evaluate_field(u_space, v, x, y, 0, 2)
        g_values = evaluate_field(f_space, g, x, y)
        oracle = _integrate(lap * g_values, wx, wy)
        scale = np.sqrt(_integrate(lap ** 2, wx, wy) * _integrate(g_values ** 2, wx, wy))
        assert abs(v @ cross @ g - oracle) <= 1e-10 * scale


def test_subdomain_mass_against_dense_quadrature():
    rng = np.random.default_rng(2)
    space = _tensor(2, 3, 1)
    x, wx, y, wy = _grid(space, 0.25, 0.75)
    gamma = subdomain_mass(space, space, Rectangle.square(0.25, 0.75))
    coeffs = rng.standard_normal(space.dim)
    oracle = _integrate(evaluate_field(space, coeffs, x, y) ** 2, wx, wy)
    assert abs(coeffs @ gamma @ coeffs - oracle) <= 1e-10 * oracle


def test_boundary_mass_edge_oracle():
    """x 的插值在四条边上：∮ x² ds = 1/3 + 1/3 + 0 + 1"""
    space = _tensor(2, 1, 1)
    coeffs = interpolate_2d(space, lambda x, y: x + 0 * y)
    value = coeffs @ boundary_mass(space, space) @ coeffs
    assert abs(value - (2.0 / 3.0 + 1.0)) <= 1e-12


def test_load_vector_against_dense_quadrature():
    """φ = cos(πx)cos(πy)：载荷向量各分量与 16 点积分一致"""
    space = _tensor(2, 3, 1)
    phi = lambda x, y: np.cos(np.pi * x) * np.cos(np.pi * y)  # noqa: E731
    x, wx, y, wy = _grid(space)
    bx = collocation_matrix(space.x_space, x).toarray()
    by = collocation_matrix(space.y_space, y).toarray()
    oracle = (bx.T @ ((wx[:, None] * wy[None, :]) * phi(x[:, None], y[None, :])) @ by).ravel()
    values = load_vector(space, phi, LoadAction.IDENTITY)
    assert np.abs(values - oracle).max() <= 1e-10 * np.abs(oracle).max()


def test_same_space_gramians_symmetric():
    space = _tensor(2, 2, 1)
    gramians = {
        "mass": mass_2d(space, space),
        "laplace": laplace_gramian_2d(space, space),
        "boundary": boundary_mass(space, space),
        "subdomain": subdomain_mass(space, space, Rectangle.square(0.25, 0.75)),
    }
    for name, matrix in gramians.items():
        assert np.abs(matrix - matrix.T).max() <= 1e-14 * np.abs(matrix).max(), name
    laplace = gramians["laplace"].toarray()
    eigenvalues = np.linalg.eigvalsh(laplace)
    print(f"[cyan]L 的最小特征值[/cyan] {eigenvalues.min():.2e}，最大 {eigenvalues.max():.2e}")
    assert eigenvalues.min() >= -1e-10 * eigenvalues.max()


def test_dirichlet_restriction_commutes_with_assembly():
    """在受限空间上组装等于删去完整组装的边界行列"""
    full = _tensor(2, 2, 1)
    restricted = _tensor(2, 2, 1, dirichlet=True)
    keep = (restricted.keep_x[:, None] * full.y_space.dim + restricted.keep_y[None, :]).ravel()
    control = _tensor(2, 2, -1)
    pairs = [
        (mass_2d(restricted, restricted), mass_2d(full, full)[keep][:, keep]),
        (laplace_gramian_2d(restricted, restricted), laplace_gramian_2d(full, full)[keep][:, keep]),
        (cross_laplace_gramian(restricted, control), cross_laplace_gramian(full, control)[keep]),
    ]
    for restricted_matrix, sliced in pairs:
        assert restricted_matrix.shape == sliced.shape
        assert np.abs(restricted_matrix - sliced).max() <= 1e-14 * max(np.abs(sliced).max(), 1.0)
    loads = (load_vector(restricted, _quadratic, LoadAction.NEG_LAPLACE),
             load_vector(full, _quadratic, LoadAction.NEG_LAPLACE)[keep])
    assert np.abs(loads[0] - loads[1]).max() <= 1e-14 * np.abs(loads[1]).max()


def test_extended_precision_assembly():
    """扩展精度组装与双精度组装在双精度舍入范围内一致"""
    space = _tensor(2, 3, 1)
    extended = laplace_gramian_2d(space, space, EXTENDED)
    double = laplace_gramian_2d(space, space)
    assert extended.dtype == EXTENDED and double.dtype == np.float64
    assert float(np.abs(extended - double).max()) <= 1e-13 * np.abs(double).max()
    load = load_vector(space, _quadratic, LoadAction.BOUNDARY_TRACE, dtype=EXTENDED)
    assert load.dtype == EXTENDED
    assert float(np.abs(load - load_vector(space, _quadratic, LoadAction.BOUNDARY_TRACE)).max()) <= 1e-15
