#!/usr/bin/env python3
"""
测试 B 样条空间、基函数求值与 Gauss 积分
"""
import numpy as np
import pytest
from rich import print

from src.errors import (
    InvalidContinuityError,
    InvalidDegreeError,
    OutOfDomainError,
    UnsupportedOrderError,
)
from src.models import TensorSpace
from src.splines import (
    EXTENDED,
    collocation_matrices,
    eval_basis,
    eval_basis_all,
    evaluate_field,
    gauss_rule,
    greville_points,
    interpolate,
    interpolate_2d,
    is_breakpoint,
    make_space,
    quadrature_grid,
)


def test_space_dimensions():
    """测试空间维数"""
    cases = [
        ((2, 3, 1), 10),      # 2^ℓ + p
        ((2, 6, 1), 66),
        ((5, 6, 4), 69),
        ((2, 3, -1), 24),     # (p+1) 2^ℓ
        ((3, 2, 0), 13),      # 1 + 4 * 3
        ((2, 0, 1), 3),
    ]
    for (p, ell, q), dim in cases:
        space = make_space(p, ell, q)
        print(f"[cyan]{space}[/cyan]: dim = {space.dim}")
        assert space.dim == dim
        assert space.num_elements == 2 ** ell
        assert len(space.knots) == space.dim + p + 1


def test_invalid_spaces():
    """测试非法参数"""
    with pytest.raises(InvalidDegreeError):
        make_space(0, 2, -1)
    with pytest.raises(InvalidDegreeError):
        make_space(2, -1, 1)
    with pytest.raises(InvalidContinuityError):
        make_space(2, 2, 2)
    with pytest.raises(InvalidContinuityError):
        make_space(3, 2, -2)


def test_partition_of_unity():
    """测试单位分解与导数之和为零"""
    rng = np.random.default_rng(0)
    points = np.concatenate([rng.random(40), [0.0, 0.25, 0.5, 1.0]])
    for p, ell, q in [(2, 3, 1), (2, 2, -1), (3, 2, 0), (4, 1, 3), (5, 2, 2)]:
        space = make_space(p, ell, q)
        for x in points:
            _, ders = eval_basis_all(space, x, 2)
            assert abs(ders[0].sum() - 1.0) < 1e-13
            assert abs(ders[1].sum()) < 1e-9
            assert abs(ders[2].sum()) < 1e-7
            assert np.all(ders[0] >= -1e-15)
    print("[green]单位分解检查通过[/green]")


def test_derivatives_against_finite_differences():
    """测试一、二阶导数与中心差分一致"""
    rng = np.random.default_rng(1)
    eps = 1e-5
    for p, ell, q in [(2, 2, 1), (3, 2, 2), (4, 1, 1)]:
        space = make_space(p, ell, q)
        for x in rng.uniform(0.01, 0.99, 20):
            if np.min(np.abs(space.breakpoints - x)) < 2 * eps:
                continue
            first, d1 = eval_basis(space, x, 1)
            _, d2 = eval_basis(space, x, 2)
            f_lo, lo = eval_basis(space, x - eps, 0)
            f_hi, hi = eval_basis(space, x + eps, 0)
            _, mid = eval_basis(space, x, 0)
            assert f_lo == first == f_hi
            assert np.allclose((hi - lo) / (2 * eps), d1, rtol=1e-6, atol=1e-6)
            assert np.allclose((hi - 2 * mid + lo) / eps ** 2, d2, rtol=1e-3, atol=1e-2)
    print("[green]有限差分检查通过[/green]")


def test_high_derivatives_vanish():
    """测试超过次数的导数为零"""
    space = make_space(2, 2, 1)
    _, ders = eval_basis_all(space, 0.3, 4)
    assert ders.shape == (5, 3)
    assert np.all(ders[3:] == 0.0)


def test_right_limit_at_breakpoints():
    """测试断点处取右极限，x=1 处取左极限"""
    space = make_space(2, 1, -1)
    first_mid, values_mid = eval_basis(space, 0.5)
    first_end, values_end = eval_basis(space, 1.0)
    print(f"[yellow]x=0.5[/yellow] 首个非零基函数: {first_mid}, [yellow]x=1[/yellow] 首个非零基函数: {first_end}")
    assert first_mid == 3
    assert np.allclose(values_mid, [1.0, 0.0, 0.0])
    assert first_end == 3
    assert np.allclose(values_end, [0.0, 0.0, 1.0])


def test_out_of_domain():
    space = make_space(2, 1, 1)
    with pytest.raises(OutOfDomainError):
        eval_basis(space, 1.5)
    with pytest.raises(OutOfDomainError):
        eval_basis(space, -1e-3)


def test_gauss_rule_exactness():
    """测试 n 点规则对 2n-1 次多项式精确"""
    for n in (1, 3, 8, 16):
        rule = gauss_rule(n)
        nodes, weights = rule.mapped(0.0, 1.0)
        degree = 2 * n - 1
        assert abs(np.sum(weights * nodes ** degree) - 1.0 / (degree + 1)) < 1e-14
        assert abs(sum(rule.weights) - 2.0) < 1e-14
    with pytest.raises(UnsupportedOrderError):
        gauss_rule(0)
    with pytest.raises(UnsupportedOrderError):
        gauss_rule(17)


def test_gauss_rule_extended_precision():
    """扩展精度规则：节点经 Newton 迭代修正，精确度达到该类型的舍入水平"""
    eps = float(np.finfo(EXTENDED).eps)
    for n in (2, 8, 16):
        rule = gauss_rule(n, EXTENDED)
        nodes, weights = rule.mapped(0.0, 1.0)
        assert nodes.dtype == EXTENDED and weights.dtype == EXTENDED
        degree = 2 * n - 1
        error = float(abs(np.sum(weights * nodes ** degree) - EXTENDED(1) / (degree + 1)))
        print(f"[cyan]n={n}[/cyan]: 扩展精度积分误差 {error:.1e}")
        assert error <= 100 * eps
        assert float(abs(np.sum(np.asarray(rule.weights)) - 2)) <= 100 * eps
        assert np.abs(np.asarray(rule.nodes, dtype=float) - np.asarray(gauss_rule(n).nodes)).max() <= 1e-15


def test_quadrature_grid():
    points, weights = quadrature_grid(np.array([0.0, 0.5, 1.0]), 3)
    assert len(points) == 6
    assert abs(weights.sum() - 1.0) < 1e-15
    assert abs(np.sum(weights * np.cos(np.pi * points))) < 1e-5


def test_polynomial_reproduction():
    """测试 Greville 插值精确重现 ≤ p 次多项式"""
    rng = np.random.default_rng(2)
    xs = rng.random(30)
    for p, ell, q in [(2, 3, 1), (3, 2, 1), (4, 2, 3)]:
        space = make_space(p, ell, q)
        for degree in range(p + 1):
            coeffs = interpolate(space, lambda x: (x - 0.3) ** degree + 0 * x)
            values = collocation_matrices(space, xs, 0)[0] @ coeffs
            assert np.allclose(values, (xs - 0.3) ** degree, atol=1e-12)
    print("[green]多项式重现检查通过[/green]")


def test_greville_points():
    space = make_space(2, 1, 1)
    assert np.allclose(greville_points(space), [0.0, 0.25, 0.75, 1.0])
    with pytest.raises(InvalidContinuityError):
        interpolate(make_space(2, 1, -1), lambda x: x)


def test_interpolate_2d_and_evaluate():
    """测试二维插值与张量网格求值（含偏导数）"""
    space = make_space(2, 2, 1)
    tspace = TensorSpace(space, space)
    coeffs = interpolate_2d(tspace, lambda x, y: x * (1 - x) + y * y)
    xs = np.linspace(0, 1, 7)
    ys = np.linspace(0, 1, 5)
    values = evaluate_field(tspace, coeffs, xs, ys)
    assert values.shape == (7, 5)
    assert np.allclose(values, xs[:, None] * (1 - xs[:, None]) + ys[None, :] ** 2, atol=1e-13)
    dxx = evaluate_field(tspace, coeffs, xs, ys, dx=2)
    dyy = evaluate_field(tspace, coeffs, xs, ys, dy=2)
    assert np.allclose(dxx, -2.0) and np.allclose(dyy, 2.0)


def test_dirichlet_restriction():
    """测试 Dirichlet 空间的系数在边界上为零"""
    space = make_space(2, 2, 1)
    tspace = TensorSpace(space, space, dirichlet=True)
    assert tspace.shape == (4, 4)
    coeffs = interpolate_2d(tspace, lambda x, y: x * (1 - x) * y * (1 - y))
    edge = np.linspace(0, 1, 25)
    assert np.max(np.abs(evaluate_field(tspace, coeffs, edge, np.array([0.0, 1.0])))) < 1e-14
    assert np.max(np.abs(evaluate_field(tspace, coeffs, np.array([0.0, 1.0]), edge))) < 1e-14


def test_is_breakpoint():
    space = make_space(2, 2, 1)
    assert is_breakpoint(space, 0.25)
    assert is_breakpoint(space, 0.75 + 1e-14)
    assert not is_breakpoint(space, 0.3)
