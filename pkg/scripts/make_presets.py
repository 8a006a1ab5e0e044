"""Regenerate the bundled preset TOML files.

Full-scale presets carry the published run counts and network sizes; the
``desk/`` variants shrink runs, episodes and oracle sizes so a laptop core
finishes each one in minutes.  Step sizes come from desk-scale sweeps.
"""

from __future__ import annotations

import copy
import sys
from pathlib import Path

import tomli_w

ROOT = Path(__file__).resolve().parents[1] / "src" / "emecs_rl" / "harness" / "presets"

GRID = [2.0**k for k in range(-18, 0)]

MC_TILE = {"id": "tile", "num_tilings": 5, "tiles_per_dim": 4}
MC_LP = {"id": "lift_project", "radius": 8.0, "shift": 6.0}
RBF = {"num_centers": 100, "width": 0.1}

TASKS = {
    "mc-pred": {
        "kind": "prediction",
        "environment": {"id": "mountain_car", "policy": "mc_fixed"},
        "agent": {"gamma": 1.0, "lam": 0.0},
        "init": (0.5, 0.1),
        "full": {"num_runs": 30, "episodes": 2000},
        "desk": {"num_runs": 5, "episodes": 500},
        "oracle_full": {"total_steps": 10_000_000, "sample_count": 500},
        "oracle_desk": {"total_steps": 100_000, "sample_count": 500},
        "methods": {
            "nn": ({"id": "identity"}, 135),
            "lpj": (MC_LP, 100),
            "lps": ({**MC_LP, "mode": "separate"}, 100),
            "tcj": ({**MC_TILE, "mode": "joint"}, 5),
            "tcs": ({**MC_TILE, "mode": "separate"}, 5),
            "tcj-lin": ({**MC_TILE, "mode": "joint"}, None),
            "tcs-lin": ({**MC_TILE, "mode": "separate"}, None),
            "rbf": ({"id": "rbf", **RBF}, 100),
            "srbf": ({"id": "srbf", **RBF}, 100),
        },
    },
    "mc-ctrl": {
        "kind": "control",
        "environment": {"id": "mountain_car", "max_steps": 1000},
        "agent": {"gamma": 1.0, "lam": 0.0, "epsilon": 0.1},
        "init": (0.1, 0.1),
        "full": {"num_runs": 30, "episodes": 500},
        "desk": {"num_runs": 5, "episodes": 500},
        "methods": {
            "nn": ({"id": "identity"}, 800),
            "lpj": (MC_LP, 800),
            "lps": ({**MC_LP, "mode": "separate"}, 800),
            "tcj": ({**MC_TILE, "mode": "joint"}, 800),
            "tcs": ({**MC_TILE, "mode": "separate"}, 800),
            "tcj-lin": ({**MC_TILE, "mode": "joint"}, None),
            "tcs-lin": ({**MC_TILE, "mode": "separate"}, None),
            "rbf": ({"id": "rbf", **RBF}, 800),
            "srbf": ({"id": "srbf", **RBF}, 800),
        },
    },
    "acrobot": {
        "kind": "control",
        "environment": {"id": "acrobot", "max_steps": 500},
        "agent": {"gamma": 1.0, "lam": 0.0, "epsilon": 0.1},
        "init": (0.1, 0.1),
        "full": {"num_runs": 30, "episodes": 500},
        "desk": {"num_runs": 3, "episodes": 100},
        "methods": {
            "nn": ({"id": "identity"}, 2000),
            "lpj": (MC_LP, 2000),
            "tcj": ({"id": "tile", "num_tilings": 8, "tiles_per_dim": 2, "memory_size": 256}, 4000),
            "tcj-lin": ({"id": "tile", "num_tilings": 8, "tiles_per_dim": 2, "memory_size": 256}, None),
        },
        # desk hidden sizes keep a single core within minutes
        "desk_hidden": {"nn": 200, "lpj": 200, "tcj": 400},
    },
    "synth-collision": {
        "kind": "continuing",
        "environment": {"id": "synthetic_collision", "behavior": "synth_behavior", "target": "synth_target"},
        "agent": {"gamma": 1.0, "lam": 0.0},
        "init": (0.01, 0.01),
        "full": {"num_runs": 30, "steps": 12_000, "eval_every": 500},
        "desk": {"num_runs": 3, "steps": 12_000, "eval_every": 500},
        "oracle_full": {"pair_count": 150},
        "oracle_desk": {"pair_count": 150},
        "methods": {
            "nn": ({"id": "identity"}, 1000),
            "tcs": ({"id": "tile", "mode": "separate", "num_tilings": 8, "tiles_per_dim": 4, "memory_size": 64}, 1000),
            "tcs-lin": ({"id": "tile", "mode": "separate", "num_tilings": 8, "tiles_per_dim": 4,
                         "memory_size": 64}, None),
            "lps": ({"id": "lift_project", "mode": "separate", "radius": 3.0, "shift": 2.0}, 1000),
        },
        # 1200 active inputs per step make 1000 hidden units cost minutes per run
        "desk_hidden": {"nn": 100, "tcs": 100, "lps": 100},
    },
}

# step sizes picked by desk-scale sweeps (scripts/sweep_step_sizes.py)
ALPHA = {
    "mc-pred": {"nn": 2**-9, "lpj": 2**-11, "lps": 2**-12, "tcj": 2**-9, "tcs": 2**-10, "tcj-lin": 2**-2,
                "tcs-lin": 2**-11, "rbf": 2**-9, "srbf": 2**-9},
    "mc-ctrl": {"nn": 2**-8, "lpj": 2**-11, "lps": 2**-12, "tcj": 2**-13, "tcs": 2**-10, "tcj-lin": 2**-4,
                "tcs-lin": 2**-5, "rbf": 2**-14, "srbf": 2**-11},
    "acrobot": {"nn": 2**-5, "lpj": 2**-11, "tcj": 2**-12, "tcj-lin": 2**-8},
    "synth-collision": {"nn": 2**-4, "tcs": 2**-5, "tcs-lin": 2**-12, "lps": 2**-6},
}


def preset(task: str, method: str, scale: str) -> dict:
    t = TASKS[task]
    transform, hidden = t["methods"][method]
    if scale == "desk" and hidden is not None:
        hidden = t.get("desk_hidden", {}).get(method, hidden)
    name = f"{task}-{method}" if scale == "full" else f"desk/{task}-{method}"
    exp = {"name": name, "method": method, "kind": t["kind"], **t[scale],
           "base_seed": 0, "output_dir": f"results/{name.replace('/', '-')}"}
    if hidden is None:
        model = {"kind": "linear"}
    else:
        ws, bs = t["init"]
        model = {"kind": "relu_net", "hidden": hidden, "weight_std": ws, "bias_std": bs, "upward": True}
    agent = {**t["agent"], "alpha": ALPHA[task][method], "alpha_grid": GRID}
    out = {"experiment": exp, "environment": copy.deepcopy(t["environment"]),
           "transform": copy.deepcopy(transform), "model": model, "agent": agent}
    if t["kind"] != "control":
        o = t[f"oracle_{scale}"]
        out["oracle"] = {"path": f"oracles/{task}-{scale}.evalset", "seed": 12345, **o}
    return out


def main(argv=None) -> int:
    for scale in ("full", "desk"):
        folder = ROOT if scale == "full" else ROOT / "desk"
        folder.mkdir(parents=True, exist_ok=True)
        for task, t in TASKS.items():
            for method in t["methods"]:
                path = folder / f"{task}-{method}.toml"
                with open(path, "wb") as fh:
                    tomli_w.dump(preset(task, method, scale), fh)
    print(f"wrote presets under {ROOT}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
