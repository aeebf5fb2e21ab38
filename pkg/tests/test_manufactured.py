#!/usr/bin/env python3
"""
测试人造解算例
"""
import numpy as np
import pytest
from rich import print

from src.errors import InvalidConfigError
from src.manufactured import (
    bubble_case,
    constant_case,
    cos_product,
    example1_case,
    example2_case,
    quadratic_case,
    sin_product,
)


def _check_derivatives(field, rng):
    """闭式导数与中心差分比较"""
    eps = 1e-5
    x = rng.uniform(0.05, 0.95, 20)
    y = rng.uniform(0.05, 0.95, 20)
    fd_dx = (field.value(x + eps, y) - field.value(x - eps, y)) / (2 * eps)
    fd_dy = (field.value(x, y + eps) - field.value(x, y - eps)) / (2 * eps)
    fd_dxx = (field.dx(x + eps, y) - field.dx(x - eps, y)) / (2 * eps)
    fd_dxy = (field.dx(x, y + eps) - field.dx(x, y - eps)) / (2 * eps)
    fd_dyy = (field.dy(x, y + eps) - field.dy(x, y - eps)) / (2 * eps)
    assert np.allclose(fd_dx, field.dx(x, y), atol=1e-6)
    assert np.allclose(fd_dy, field.dy(x, y), atol=1e-6)
    assert np.allclose(fd_dxx, field.dxx(x, y), atol=1e-5)
    assert np.allclose(fd_dxy, field.dxy(x, y), atol=1e-5)
    assert np.allclose(fd_dyy, field.dyy(x, y), atol=1e-5)


def test_closed_form_derivatives():
    rng = np.random.default_rng(0)
    for field in (cos_product(1), cos_product(3), sin_product(2), bubble_case().u_d,
                  quadratic_case().u):
        _check_derivatives(field, rng)
    print("[green]闭式导数检查通过[/green]")


def test_example1_source_is_negative_laplacian():
    """f = -Δu = 2k²π² cos(kπx)cos(kπy)"""
    rng = np.random.default_rng(1)
    x, y = rng.random(30), rng.random(30)
    for k in (1, 2, 3):
        case = example1_case(k)
        assert np.allclose(case.f(x, y), case.u.neg_laplacian(x, y))
        assert np.allclose(case.g(x, y), case.u(x, y))
        assert case.f(0.0, 0.0) == pytest.approx(2 * k ** 2 * np.pi ** 2)


def test_example2_data():
    """u_d 在边界上为零，f_p = -Δu_d"""
    rng = np.random.default_rng(2)
    x, y = rng.random(30), rng.random(30)
    edge = np.linspace(0, 1, 100)
    for k in (1, 2):
        case = example2_case(k)
        assert np.allclose(case.f_p(x, y), case.u_d.neg_laplacian(x, y))
        assert np.max(np.abs(case.u_d(edge, np.zeros_like(edge)))) < 1e-12
        assert np.max(np.abs(case.u_d(np.ones_like(edge), edge))) < 1e-12
    zero = example2_case(1, zero_prior=True)
    assert np.all(zero.f_p(x, y) == 0.0)
    assert zero.name.endswith("zero-prior")


def test_polynomial_cases():
    x = np.linspace(0, 1, 11)
    y = x[::-1]
    quad = quadratic_case()
    assert np.allclose(quad.f(x, y), quad.u.neg_laplacian(x, y))
    const = constant_case()
    assert np.allclose(const.u(x, y), 1.0) and np.allclose(const.f(x, y), 0.0)
    bubble = bubble_case()
    assert np.allclose(bubble.f_p(x, y), bubble.u_d.neg_laplacian(x, y))


def test_invalid_wavenumber():
    with pytest.raises(InvalidConfigError):
        example1_case(0)
    with pytest.raises(InvalidConfigError):
        example2_case(-1)
