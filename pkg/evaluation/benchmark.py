# 文件路径: evaluation/benchmark.py
"""
完整收敛网格 (非门控的扩展实验)

9 个测试函数 × 若干网格层 × {uniform, quasi} × {linear, quadratic},
结果写入一个 CSV。运行时间较长, 不在 pytest 中执行。

    python -m evaluation.benchmark --n 5,10,15,20 --output results/full_grid.csv
"""

from __future__ import annotations

import logging
import os
import time
from typing import List, Sequence

from app.core.config import mesh_config, output_config
from app.core.exceptions import HistopolationError
from app.schemas.histo import GRID_HEADER
from app.services.histopolation import LocalScheme, convergence_study
from app.services.mesh import MeshKind
from app.services.moments import WeightSpec
from app.services.test_functions import TEST_FUNCTIONS
from app.utils.locking import AtomicFileWriter

logger = logging.getLogger(__name__)


def run_full_grid(
    n_list: Sequence[int],
    weight: WeightSpec,
    functions: Sequence[int] = tuple(TEST_FUNCTIONS),
    mesh_kinds: Sequence[MeshKind] = (MeshKind.UNIFORM, MeshKind.QUASI),
    delta: float = mesh_config.delta,
    seed: int = mesh_config.seed,
) -> List[list]:
    rows: List[list] = []
    for kind in mesh_kinds:
        for f_id in functions:
            t0 = time.perf_counter()
            try:
                table = convergence_study(
                    f_id, weight, n_list,
                    (LocalScheme.LINEAR, LocalScheme.QUADRATIC),
                    mesh_kind=kind, delta=delta, seed=seed,
                )
            except HistopolationError as e:
                logger.error("f%d on %s mesh failed: %s", f_id, kind.value, e.message)
                continue
            for r in table.rows():
                rows.append([table.function, kind.value] + r)
            print(f"  ✅ f{f_id} [{kind.value}] {time.perf_counter() - t0:.1f}s")
    return rows


if __name__ == "__main__":
    import argparse

    parser = argparse.ArgumentParser(description="完整收敛网格基准")
    parser.add_argument("--n", default="5,10,15,20", help="网格层, 逗号分隔")
    parser.add_argument("--weight", default="dirichlet:1,1,1,1")
    parser.add_argument("--functions", default="1,2,3,4,5,6,7,8,9")
    parser.add_argument("--delta", type=float, default=mesh_config.delta)
    parser.add_argument("--seed", type=int, default=mesh_config.seed)
    parser.add_argument("--output", "-o", default=os.path.join(output_config.output_dir, "full_grid.csv"))
    parser.add_argument("--log-level", default="INFO")
    args = parser.parse_args()

    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.INFO))
    n_list = [int(t) for t in args.n.split(",") if t.strip()]
    functions = [int(t) for t in args.functions.split(",") if t.strip()]

    print("=" * 60)
    print("📊 完整收敛网格")
    print("=" * 60)
    rows = run_full_grid(n_list, WeightSpec.parse(args.weight, d=3), functions, delta=args.delta, seed=args.seed)
    AtomicFileWriter(args.output).write_csv(GRID_HEADER, rows)
    print(f"📝 {len(rows)} 行已写入: {args.output}")
