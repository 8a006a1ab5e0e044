"""Step-size study for one or more presets over a power-of-two grid.

    python scripts/sweep_step_sizes.py desk/mc-pred-tcj desk/mc-pred-nn --exps -10 -4 --runs 3
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from emecs_rl.harness.config import load_preset
from emecs_rl.harness.runner import load_oracle, run_sweep


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("presets", nargs="+")
    p.add_argument("--exps", nargs=2, type=int, default=(-14, -2), metavar=("LO", "HI"),
                   help="grid is 2**LO .. 2**HI")
    p.add_argument("--runs", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--out", default="results/sweeps")
    args = p.parse_args(argv)
    grid = [2.0**k for k in range(args.exps[0], args.exps[1] + 1)]
    for name in args.presets:
        cfg = load_preset(name)
        changes = {"agent": {"alpha_grid": grid}}
        if args.runs:
            changes["num_runs"] = args.runs
        if args.episodes and cfg.kind != "continuing":
            changes["episodes"] = args.episodes
        cfg = cfg.replace(**changes)
        res = run_sweep(cfg, Path(args.out) / name.replace("/", "-"), oracle=load_oracle(cfg, build_missing=True))
        print(f"== {name}")
        for c in res.cells:
            mark = "*" if c.alpha == res.selected_alpha else " "
            print(f" {mark} 2^{round(math.log2(c.alpha)):<4d} {c.mean:10.4f} +- {c.stderr:8.4f}"
                  f"  failures {c.failures}/{c.num_runs}", flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
