"""Run the desk presets behind each method comparison and print a report table per group.

    python scripts/desk_figures.py mc-pred joint-vs-separate --out results/figures
    python scripts/desk_figures.py all --runs 2
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from emecs_rl.harness.config import load_preset
from emecs_rl.harness.report import report
from emecs_rl.harness.runner import load_oracle, run_experiment

GROUPS = {
    "mc-pred": ["mc-pred-tcj-lin", "mc-pred-nn", "mc-pred-tcj", "mc-pred-lpj"],
    "mc-ctrl": ["mc-ctrl-tcj", "mc-ctrl-lpj", "mc-ctrl-nn"],
    "joint-vs-separate": ["mc-pred-tcj-lin", "mc-pred-tcs-lin", "mc-pred-tcj", "mc-pred-tcs",
                          "mc-pred-lpj", "mc-pred-lps"],
    "rbf": ["mc-ctrl-rbf", "mc-ctrl-srbf", "mc-ctrl-lpj"],
    "acrobot": ["acrobot-tcj-lin", "acrobot-nn", "acrobot-tcj", "acrobot-lpj"],
    "synthetic": ["synth-collision-nn", "synth-collision-tcs", "synth-collision-tcs-lin", "synth-collision-lps"],
}


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("groups", nargs="+", choices=[*GROUPS, "all"])
    p.add_argument("--out", default="results/figures")
    p.add_argument("--runs", type=int, help="override the preset run count")
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)
    groups = list(GROUPS) if "all" in args.groups else args.groups
    out = Path(args.out)
    done: set[str] = set()
    for group in groups:
        dirs = []
        for name in GROUPS[group]:
            target = out / name
            dirs.append(target)
            if name in done:
                continue
            cfg = load_preset(f"desk/{name}")
            if args.runs:
                cfg = cfg.replace(num_runs=args.runs)
            run_experiment(cfg, target, workers=args.workers, oracle=load_oracle(cfg, build_missing=True))
            done.add(name)
        print(f"== {group}")
        print(report(dirs, out / f"{group}.csv"), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
