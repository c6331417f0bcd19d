# evaluation/__init__.py
"""
Evaluation 模块

- 完整收敛网格 (benchmark.py): 9 个测试函数 × 网格层 × 网格类型 × 格式

使用示例:
    from evaluation import run_full_grid
"""

from evaluation.benchmark import run_full_grid

__all__ = ["run_full_grid"]
