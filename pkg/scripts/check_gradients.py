#!/usr/bin/env python3
"""Validate the hand-written backward pass against central finite
differences on random toy configurations; nonzero exit on any mismatch.

Runs without installing the package (falls back to ../src).
"""

import argparse
import sys
from pathlib import Path

try:
    import slicegraph  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from slicegraph.gradients import run_gradcheck


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trials", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epsilon", type=float, default=1e-5)
    args = parser.parse_args()

    result = run_gradcheck(args.trials, seed=args.seed, epsilon=args.epsilon)
    for trial in result["trials"]:
        print(f"{trial['variant']:9s} n={trial['n_nodes']} d={trial['d']} "
              f"labels={trial['n_labels']} q={trial['q']} "
              f"rel_error={trial['rel_error']:.3e}")
    print(f"max relative error {result['max_rel_error']:.3e} "
          f"(tolerance {result['tolerance']:.0e}, "
          f"{result['redraws']} hinge redraws)")
    print("PASS" if result["passed"] else "FAIL")
    return 0 if result["passed"] else 3


if __name__ == "__main__":
    raise SystemExit(main())
