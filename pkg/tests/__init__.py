"""
样条 Galerkin 求解器的测试
"""
