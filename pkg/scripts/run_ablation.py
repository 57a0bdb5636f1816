#!/usr/bin/env python3
"""Full ablation grid (variant x neighbourhood size x edge weighting),
several seeds per cell, printed as aligned tables.

Runs without installing the package (falls back to ../src).
"""

import argparse
import sys
from pathlib import Path

try:
    import slicegraph  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from slicegraph.experiments import (AblationGrid, desk_task_config,
                                    desk_train_config, format_ablation_text,
                                    run_ablation)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=3,
                        help="training runs per grid cell")
    parser.add_argument("--seed", type=int, default=0, help="base seed")
    parser.add_argument("--out", type=Path, default=None)
    args = parser.parse_args()

    def progress(cell):
        tag = f"{cell['variant']:9s} q={cell['q']:<2d} {cell['weight_fn']:10s}"
        if "error" in cell:
            print(f"{tag} ERROR {cell['error']}", flush=True)
        else:
            print(f"{tag} f1 {cell['mean']['f1']:.4f} +/- {cell['std']['f1']:.4f}"
                  f"  ({cell['seconds']:.1f}s)", flush=True)

    report = run_ablation(
        desk_task_config(seed=args.seed),
        desk_train_config(seed=args.seed),
        AblationGrid(n_seeds=args.seeds),
        out_dir=args.out, progress=progress,
    )
    print()
    print(format_ablation_text(report))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
