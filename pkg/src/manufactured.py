"""
人造解算例

所有函数都是 numpy 向量化的 φ(x, y)，导数以闭式给出。
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import InvalidConfigError

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AnalyticField:
    """带闭式一、二阶偏导数的精确函数"""
    value: Field
    dx: Field
    dy: Field
    dxx: Field
    dxy: Field
    dyy: Field

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.value(x, y)

    def neg_laplacian(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return -(self.dxx(x, y) + self.dyy(x, y))


@dataclass(frozen=True)
class ManufacturedCase:
    """
    一个算例的全部数据

    正问题用 u / f / g，反问题用 u_d / f_p；不适用的字段为 None。
    """
    name: str
    k: int
    u: Optional[AnalyticField] = None
    f: Optional[Field] = None
    g: Optional[Field] = None
    u_d: Optional[AnalyticField] = None
    f_p: Optional[Field] = None


def _zero(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.zeros(np.broadcast(x, y).shape)


def cos_product(k: int) -> AnalyticField:
    """u = cos(kπx) cos(kπy)"""
    w = k * np.pi
    return AnalyticField(
        value=lambda x, y: np.cos(w * x) * np.cos(w * y),
        dx=lambda x, y: -w * np.sin(w * x) * np.cos(w * y),
        dy=lambda x, y: -w * np.cos(w * x) * np.sin(w * y),
        dxx=lambda x, y: -w * w * np.cos(w * x) * np.cos(w * y),
        dxy=lambda x, y: w * w * np.sin(w * x) * np.sin(w * y),
        dyy=lambda x, y: -w * w * np.cos(w * x) * np.cos(w * y),
    )


def sin_product(k: int) -> AnalyticField:
    """u = sin(kπx) sin(kπy)"""
    w = k * np.pi
    return AnalyticField(
        value=lambda x, y: np.sin(w * x) * np.sin(w * y),
        dx=lambda x, y: w * np.cos(w * x) * np.sin(w * y),
        dy=lambda x, y: w * np.sin(w * x) * np.cos(w * y),
        dxx=lambda x, y: -w * w * np.sin(w * x) * np.sin(w * y),
        dxy=lambda x, y: w * w * np.cos(w * x) * np.cos(w * y),
        dyy=lambda x, y: -w * w * np.sin(w * x) * np.sin(w * y),
    )


def example1_case(k: int = 1) -> ManufacturedCase:
    """
    正问题算例：g = u = cos(kπx)cos(kπy)

    源项取 f = -Δu = 2k²π² cos(kπx)cos(kπy)，使 u 是损失 ‖-Δv - f‖² + α²‖v - g‖² 的零残差极小点。
    """
    if k < 1:
        raise InvalidConfigError(f"波数 k 必须 ≥ 1（当前 k={k}）")
    u = cos_product(k)
    c = 2.0 * (k * np.pi) ** 2
    return ManufacturedCase(
        name=f"example1-k{k}",
        k=k,
        u=u,
        f=lambda x, y: c * np.cos(k * np.pi * x) * np.cos(k * np.pi * y),
        g=u.value,
    )


def example2_case(k: int = 1, zero_prior: bool = False) -> ManufacturedCase:
    """
    反问题算例：u_d = sin(πkx)sin(πky)，f_p = 2π²k² sin(πkx)sin(πky) = -Δu_d

    zero_prior=True 时先验取 f_p = 0（探索性运行）。
    """
    if k < 1:
        raise InvalidConfigError(f"波数 k 必须 ≥ 1（当前 k={k}）")
    u_d = sin_product(k)
    c = 2.0 * (k * np.pi) ** 2
    prior: Field = _zero if zero_prior else (
        lambda x, y: c * np.sin(k * np.pi * x) * np.sin(k * np.pi * y)
    )
    return ManufacturedCase(
        name=f"example2-k{k}" + ("-zero-prior" if zero_prior else ""),
        k=k,
        u=u_d,
        u_d=u_d,
        f_p=prior,
    )


def quadratic_case() -> ManufacturedCase:
    """u = x(1-x) + y(1-y)，Δu ≡ -4：p ≥ 2 时精确属于离散空间"""
    u = AnalyticField(
        value=lambda x, y: x * (1 - x) + y * (1 - y),
        dx=lambda x, y: (1 - 2 * x) + 0 * y,
        dy=lambda x, y: (1 - 2 * y) + 0 * x,
        dxx=lambda x, y: np.full(np.broadcast(x, y).shape, -2.0),
        dxy=_zero,
        dyy=lambda x, y: np.full(np.broadcast(x, y).shape, -2.0),
    )
    return ManufacturedCase(
        name="quadratic",
        k=0,
        u=u,
        f=lambda x, y: np.full(np.broadcast(x, y).shape, 4.0),
        g=u.value,
    )


def constant_case() -> ManufacturedCase:
    """u ≡ 1，f = 0，g = 1"""
    one = lambda x, y: np.ones(np.broadcast(x, y).shape)  # noqa: E731
    u = AnalyticField(value=one, dx=_zero, dy=_zero, dxx=_zero, dxy=_zero, dyy=_zero)
    return ManufacturedCase(name="constant", k=0, u=u, f=_zero, g=one)


def bubble_case() -> ManufacturedCase:
    """
    反问题零残差算例：u_d = x(1-x)y(1-y)，f_p = -Δu_d = 2y(1-y) + 2x(1-x)

    p=2 时 u_d 属于状态空间，f_p 属于两种控制空间。
    """
    u_d = AnalyticField(
        value=lambda x, y: x * (1 - x) * y * (1 - y),
        dx=lambda x, y: (1 - 2 * x) * y * (1 - y),
        dy=lambda x, y: x * (1 - x) * (1 - 2 * y),
        dxx=lambda x, y: -2 * y * (1 - y) + 0 * x,
        dxy=lambda x, y: (1 - 2 * x) * (1 - 2 * y),
        dyy=lambda x, y: -2 * x * (1 - x) + 0 * y,
    )
    return ManufacturedCase(
        name="bubble",
        k=0,
        u=u_d,
        u_d=u_d,
        f_p=lambda x, y: 2 * y * (1 - y) + 2 * x * (1 - x),
    )
