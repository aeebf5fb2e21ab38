"""
加权最小二乘 Poisson 问题的样条 Galerkin 求解器

正问题：边界罚的最小二乘 Poisson 方程；反问题：部分观测下的源项重建。
"""

__version__ = "1.0.0"
