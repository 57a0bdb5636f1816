#!/usr/bin/env python3
"""Train one model on the desk-scale synthetic task and report test metrics.

Runs without installing the package (falls back to ../src).
"""

import argparse
import json
import sys
from pathlib import Path

try:
    import slicegraph  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from slicegraph.experiments import (desk_task_config, desk_train_config,
                                    train_and_evaluate)
from slicegraph.graph import GraphConfig, WeightFn
from slicegraph.model import Variant


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--variant", choices=[v.value for v in Variant],
                        default="cheb")
    parser.add_argument("--q", type=int, default=4)
    parser.add_argument("--weight-fn", choices=[w.value for w in WeightFn],
                        default="inverse-dm")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--out", type=Path, default=None,
                        help="directory for checkpoints and the training log")
    args = parser.parse_args()

    result, thresholds, report = train_and_evaluate(
        desk_task_config(seed=args.seed),
        GraphConfig(q=args.q, weight_fn=WeightFn(args.weight_fn)),
        Variant(args.variant),
        desk_train_config(seed=args.seed, total_steps=args.steps,
                          warmup_steps=max(1, args.steps // 10)),
        out_dir=args.out,
    )
    print(json.dumps({
        "final_loss": result.loss_curve[-1]["loss"],
        "thresholds": [float(t) for t in thresholds],
        "macro": report.macro,
    }, indent=2))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
