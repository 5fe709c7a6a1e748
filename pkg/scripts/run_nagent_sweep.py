#!/usr/bin/env python3
"""Population-size sweep: how fast the finite-population utility approaches
the mean-field utility at the equilibrium policy."""

import argparse
import pathlib
import sys

from lqmfg.cli import load_config, run_nagent_validation

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--ns", default="10,100,1000")
    parser.add_argument("--reps", type=int, default=2000)
    args = parser.parse_args()
    cfg = load_config(CONFIGS / "table1_gda_exact.cfg")
    payload = run_nagent_validation(
        cfg, Ns=tuple(int(v) for v in args.ns.split(",")), reps=args.reps)
    for row in payload["rows"]:
        print(f"N={row['N']:>5}: mean {row['mean']:.5f} "
              f"(se {row['stderr']:.5f}), relative gap {row['rel_gap']:.4f}")
    print(f"mean-field reference: {payload['mkv_mean']:.5f} "
          f"(se {payload['mkv_stderr']:.5f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
