"""Command-line entry point: ``emecs-rl {oracle,run,sweep,heatmap,report}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..agents import DivergenceError
from ..approximator import DimensionError, ReluNet, load_checkpoint
from ..evaluation import OracleError
from ..transforms import make_transform
from .config import ConfigError, ExperimentConfig, load_config, load_preset
from .heatmap import HeatmapError, export_heatmaps
from .report import ReportError, report
from .runner import build_oracle, load_oracle, make_environment, run_experiment, run_seeds, run_sweep

DECLARED_ERRORS = (ConfigError, OracleError, HeatmapError, ReportError, DimensionError, DivergenceError,
                   ValueError, OSError)


def _resolve_config(args) -> ExperimentConfig:
    if args.preset and args.config:
        raise ConfigError("give either a config path or --preset, not both")
    if args.preset:
        cfg = load_preset(args.preset)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigError("a config path or --preset is required")
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(base_seed=args.seed)
    return cfg


def _config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", nargs="?", help="experiment TOML file")
    p.add_argument("--preset", help="bundled preset name, e.g. desk/mc-pred-tcj")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--out", help="output location")


def cmd_oracle(args) -> int:
    cfg = _resolve_config(args)
    if args.seed is not None:
        cfg = cfg.replace(oracle={"seed": args.seed})
    if cfg.kind == "control":
        raise ConfigError("control experiments have no oracle")
    D = build_oracle(cfg)
    path = Path(args.out or cfg.oracle["path"])
    path.parent.mkdir(parents=True, exist_ok=True)
    D.save(path)
    t = D.targets
    print(f"{path}: {len(D)} probes, target mean={t.mean():.6g} std={t.std():.6g} "
          f"min={t.min():.6g} max={t.max():.6g}")
    return 0


def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    if args.runs is not None:
        cfg = cfg.replace(num_runs=args.runs)
    alpha = args.alpha if args.alpha is not None else cfg.alpha
    out = args.out or cfg.output_dir
    results = run_experiment(cfg, out, alpha=alpha, workers=args.workers,
                             oracle=load_oracle(cfg, build_missing=args.build_oracle))
    failed = sum(r.failed for r in results)
    print(f"{out}: {len(results)} runs at alpha={alpha:g}, {failed} diverged")
    return 0


def cmd_sweep(args) -> int:
    cfg = _resolve_config(args)
    if args.runs is not None:
        cfg = cfg.replace(num_runs=args.runs)
    out = args.out or cfg.output_dir
    res = run_sweep(cfg, out, workers=args.workers, oracle=load_oracle(cfg, build_missing=args.build_oracle))
    for c in res.cells:
        print(f"alpha={c.alpha:<10g} final={c.mean:.6g} +- {c.stderr:.3g} failures={c.failures}/{c.num_runs}")
    note = " (every step size had failures)" if res.flagged else ""
    print(f"selected alpha={res.selected_alpha:g}{note}")
    return 0


def _parse_nodes(spec: str, n_hidden: int):
    if spec == "all":
        return list(range(n_hidden))
    try:
        return [int(v) for v in spec.split(",") if v]
    except ValueError:
        raise ConfigError(f"node list must be 'all' or comma-separated integers, got {spec!r}") from None


def cmd_heatmap(args) -> int:
    cfg = _resolve_config(args)
    net = load_checkpoint(args.checkpoint)
    if not isinstance(net, ReluNet):
        raise HeatmapError("heatmaps need a network checkpoint")
    env = make_environment(cfg)
    if np.asarray(env.bounds).shape != (2, 2):
        raise HeatmapError("heatmaps are defined for 2-D state spaces only")
    _, _, transform_rng = run_seeds(cfg, args.run)
    params = {k: v for k, v in cfg.transform.items() if k != "id"}
    transform = make_transform(cfg.transform["id"], env.bounds, rng=transform_rng, **params)
    if transform.n_features != net.shape[0]:
        raise DimensionError(f"checkpoint expects {net.shape[0]} inputs, config yields {transform.n_features}")
    out = args.out or str(Path(cfg.output_dir) / "heatmaps")
    counts = export_heatmaps(net, transform, env.bounds, args.grid, out, _parse_nodes(args.nodes, net.shape[1]))
    single = sum(c == 1 for c in counts.values())
    print(f"{out}: {len(counts)} nodes, {single} with a single connected region")
    return 0


def cmd_report(args) -> int:
    print(report(args.dirs, args.out), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emecs-rl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("oracle", help="build an evaluation set")
    _config_args(p)
    p.set_defaults(func=cmd_oracle)

    for name, func in (("run", cmd_run), ("sweep", cmd_sweep)):
        p = sub.add_parser(name, help=f"{name} an experiment")
        _config_args(p)
        p.add_argument("--runs", type=int, help="override num_runs")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--build-oracle", action="store_true", help="build the oracle if it is missing")
        if name == "run":
            p.add_argument("--alpha", type=float, help="override the step size")
        p.set_defaults(func=func)

    p = sub.add_parser("heatmap", help="export hidden-node response maps")
    _config_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--nodes", default="all")
    p.add_argument("--grid", type=int, default=100)
    p.add_argument("--run", type=int, default=0, help="run index whose transform seed to reuse")
    p.set_defaults(func=cmd_heatmap)

    p = sub.add_parser("report", help="compare result directories")
    p.add_argument("dirs", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except DECLARED_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
