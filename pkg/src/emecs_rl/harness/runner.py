"""Build pipelines from configs, execute runs and sweeps, persist CSVs."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from .. import envs
from ..agents import (
    AgentConfig,
    DivergenceError,
    Pipeline,
    run_continuing_prediction,
    run_control_episode,
    run_prediction_episode,
)
from ..approximator import InitSpec, LinearModel, init_relu_net, save_checkpoint
from ..evaluation import (
    EvaluationSet,
    SweepCell,
    aggregate_runs,
    build_rmsre_oracle,
    build_rmsve_oracle,
    feature_matrix,
    final_performance,
    rmsre,
    rmsve,
    select_step_size,
    selection_flagged,
)
from ..transforms import make_transform
from .config import ConfigError, ExperimentConfig

log = logging.getLogger(__name__)

FINAL_FRACTION = 0.05


# ---------------------------------------------------------------- building


def make_environment(cfg: ExperimentConfig):
    params = {k: v for k, v in cfg.environment.items() if k not in ("id", "policy", "behavior", "target")}
    return envs.make_env(cfg.environment["id"], **params)


def make_policy(cfg: ExperimentConfig, role: str = "policy"):
    name = cfg.environment.get(role)
    if name is None:
        raise ConfigError(f"environment.{role} is required for {cfg.kind} experiments")
    table = {
        "mc_fixed": envs.mc_fixed_policy,
        "synth_behavior": envs.synth_behavior,
        "synth_target": envs.synth_target,
    }
    try:
        return table[name]
    except KeyError:
        raise ConfigError(f"unknown policy {name!r}") from None


def run_seeds(cfg: ExperimentConfig, run_index: int):
    """(agent rng, init seed, transform rng) for one run; depends only on the
    absolute seed base_seed + run_index."""
    seed = cfg.base_seed + run_index
    agent_ss, init_ss, transform_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(agent_ss),
        int(init_ss.generate_state(1, dtype=np.uint64)[0]),
        np.random.default_rng(transform_ss),
    )


def make_transform_for(cfg: ExperimentConfig, env, rng):
    params = {k: v for k, v in cfg.transform.items() if k != "id"}
    return make_transform(cfg.transform["id"], env.bounds, rng=rng, **params)


def make_model(cfg: ExperimentConfig, transform, num_outputs: int, init_seed: int):
    m = cfg.model
    kind = m.get("kind", "relu_net")
    if kind == "linear":
        return LinearModel(transform.n_features, num_outputs)
    if kind != "relu_net":
        raise ConfigError(f"unknown model kind {kind!r}")
    spec = InitSpec(
        weight_std=float(m.get("weight_std", 0.5)),
        bias_std=float(m.get("bias_std", 0.1)),
        seed=init_seed,
        upward_dims=list(transform.upward_dims) if m.get("upward", True) else [],
    )
    return init_relu_net(transform.n_features, int(m["hidden"]), num_outputs, spec)


def build_pipeline(cfg: ExperimentConfig, run_index: int = 0):
    rng, init_seed, transform_rng = run_seeds(cfg, run_index)
    env = make_environment(cfg)
    transform = make_transform_for(cfg, env, transform_rng)
    outputs = env.num_actions if cfg.kind == "control" else 1
    model = make_model(cfg, transform, outputs, init_seed)
    return env, Pipeline(transform, model), rng


def agent_config(cfg: ExperimentConfig, alpha: float) -> AgentConfig:
    a = cfg.agent
    return AgentConfig(
        alpha=float(alpha),
        gamma=float(a.get("gamma", 1.0)),
        lam=float(a.get("lam", 0.0)),
        epsilon=float(a.get("epsilon", 0.1)),
    )


# ------------------------------------------------------------------ oracles


def build_oracle(cfg: ExperimentConfig) -> EvaluationSet:
    o = cfg.oracle
    rng = np.random.default_rng(int(o.get("seed", 0)))
    env = make_environment(cfg)
    if cfg.kind == "prediction":
        env.max_steps = None
        return build_rmsve_oracle(
            env, make_policy(cfg), int(o["total_steps"]), int(o["sample_count"]), rng,
            rollouts=int(o.get("rollouts", 1)),
        )
    if cfg.kind == "continuing":
        gap = tuple(o.get("gap", (20, 200)))
        return build_rmsre_oracle(
            env, make_policy(cfg, "behavior"), make_policy(cfg, "target"), int(o["pair_count"]), rng, gap
        )
    raise ConfigError("control experiments have no oracle")


def load_oracle(cfg: ExperimentConfig, build_missing: bool = False) -> EvaluationSet | None:
    if cfg.kind == "control":
        return None
    path = Path(cfg.oracle["path"])
    if not path.exists():
        if not build_missing:
            raise ConfigError(f"oracle {path} does not exist; build it with the 'oracle' command")
        D = build_oracle(cfg)
        path.parent.mkdir(parents=True, exist_ok=True)
        D.save(path)
        return D
    return EvaluationSet.load(path)


# --------------------------------------------------------------------- runs


@dataclass
class RunResult:
    run_index: int
    seed: int
    alpha: float
    curve: np.ndarray
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    returns: np.ndarray = field(default_factory=lambda: np.zeros(0))
    mean_abs_delta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    truncated: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    failed: bool = False
    failure_episode: int | None = None
    wall_clock: float = 0.0
    collisions: int = 0
    weights: np.ndarray | None = None
    model_shape: tuple = ()
    model_kind: str = ""


def execute_run(cfg: ExperimentConfig, run_index: int, alpha: float, oracle: EvaluationSet | None) -> RunResult:
    start = time.perf_counter()
    env, pipeline, rng = build_pipeline(cfg, run_index)
    acfg = agent_config(cfg, alpha)
    features = feature_matrix(pipeline.transform, oracle.probes) if oracle is not None else None
    res = RunResult(run_index, cfg.base_seed + run_index, alpha, np.zeros(0))
    if cfg.kind == "continuing":
        n_points = cfg.steps // cfg.eval_every + 1
        curve = np.full(n_points, np.nan)

        def checkpoint(t):
            curve[t // cfg.eval_every] = rmsre(pipeline, oracle, features)

        try:
            run_continuing_prediction(
                env, make_policy(cfg, "behavior"), pipeline, acfg, rng, cfg.steps,
                on_checkpoint=checkpoint, checkpoint_every=cfg.eval_every,
            )
        except DivergenceError as err:
            res.failed, res.failure_episode = True, err.step
        res.curve = curve
    else:
        n = cfg.episodes
        curve = np.full(n, np.nan)
        steps, rets, deltas = np.zeros(n, dtype=int), np.full(n, np.nan), np.full(n, np.nan)
        trunc = np.zeros(n, dtype=bool)
        policy = make_policy(cfg) if cfg.kind == "prediction" else None
        for ep in range(n):
            try:
                if cfg.kind == "prediction":
                    rec = run_prediction_episode(env, policy, pipeline, acfg, rng)
                else:
                    rec = run_control_episode(env, pipeline, acfg, rng)
                if not np.all(np.isfinite(pipeline.model.w)):
                    raise DivergenceError("non-finite parameters", episode=ep)
            except DivergenceError:
                res.failed, res.failure_episode = True, ep
                break
            steps[ep], rets[ep], deltas[ep], trunc[ep] = rec.steps, rec.ret, rec.mean_abs_delta, rec.truncated
            curve[ep] = rmsve(pipeline, oracle, features) if cfg.kind == "prediction" else rec.steps
        res.curve, res.steps, res.returns, res.mean_abs_delta, res.truncated = curve, steps, rets, deltas, trunc
    res.wall_clock = time.perf_counter() - start
    res.collisions = int(getattr(pipeline.transform, "collisions", 0))
    res.weights = pipeline.model.w.copy()
    res.model_shape = tuple(pipeline.model.shape)
    res.model_kind = pipeline.model.kind
    return res


def _execute(args):
    return execute_run(*args)


def execute_batch(cfg: ExperimentConfig, alpha: float, oracle, workers: int = 1) -> list[RunResult]:
    jobs = [(cfg, i, alpha, oracle) for i in range(cfg.num_runs)]
    if workers <= 1:
        return [execute_run(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute, jobs))


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else repr(float(v))
    return str(v)


def write_csv(path, header: list[str], rows, config_hash: str) -> None:
    buf = io.StringIO()
    buf.write(f"# config_sha256={config_hash}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_csv(path) -> tuple[list[str], list[dict]]:
    """Return (comment lines, rows as dicts)."""
    comments, body = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            (comments if line.startswith("#") else body).append(line)
    return comments, list(csv.DictReader(body))


def successful_curves(results: list[RunResult]) -> list[np.ndarray]:
    return [r.curve for r in results if not r.failed]


def run_scores(results: list[RunResult]) -> SweepCell:
    scores = [final_performance(r.curve, FINAL_FRACTION) for r in results if not r.failed]
    return SweepCell(results[0].alpha, scores, failures=sum(r.failed for r in results))


def write_results(cfg: ExperimentConfig, results: list[RunResult], out_dir, flagged: bool = False) -> Path:
    out = Path(out_dir)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    h = cfg.config_hash()
    index = "step" if cfg.kind == "continuing" else "episode"
    for r in results:
        if cfg.kind == "continuing":
            rows = [(i * cfg.eval_every, v) for i, v in enumerate(r.curve)]
            header = [index, cfg.metric]
        else:
            rows = zip(range(1, len(r.curve) + 1), r.curve, r.steps, r.returns, r.mean_abs_delta, r.truncated)
            header = [index, cfg.metric, "steps", "return", "mean_abs_delta", "truncated"]
        write_csv(out / f"run_{r.run_index:03d}.csv", header, rows, h)
        _save_weights(out / "checkpoints" / f"run_{r.run_index:03d}.npz", r)
    good = successful_curves(results)
    n_points = len(results[0].curve)
    if good:
        mean, std, se = aggregate_runs(good)
    else:
        mean = std = se = np.full(n_points, np.nan)
    xs = [i * cfg.eval_every for i in range(n_points)] if cfg.kind == "continuing" else range(1, n_points + 1)
    write_csv(out / "aggregate.csv", [index, "mean", "std", "stderr"], zip(xs, mean, std, se), h)
    cell = run_scores(results)
    write_csv(
        out / "summary.csv",
        ["method", "environment", "kind", "metric", "lambda", "alpha", "final_mean", "final_stderr",
         "num_runs", "failures", "failure_rate", "flagged"],
        [(cfg.method, cfg.environment["id"], cfg.kind, cfg.metric, float(cfg.agent.get("lam", 0.0)),
          results[0].alpha, cell.mean, cell.stderr, len(results), cell.failures,
          cell.failures / len(results), flagged)],
        h,
    )
    timing = {f"run_{r.run_index:03d}": {"wall_clock": r.wall_clock, "collisions": r.collisions,
                                         "failure_episode": r.failure_episode} for r in results}
    (out / "timing.json").write_text(json.dumps(timing, indent=1, sort_keys=True))
    return out


def _save_weights(path, r: RunResult):
    save_checkpoint(path, SimpleNamespace(kind=r.model_kind, shape=r.model_shape, w=r.weights))


def run_experiment(cfg: ExperimentConfig, out_dir=None, alpha=None, workers: int = 1,
                   oracle: EvaluationSet | None = None) -> list[RunResult]:
    if oracle is None:
        oracle = load_oracle(cfg)
    alpha = cfg.alpha if alpha is None else alpha
    results = execute_batch(cfg, alpha, oracle, workers)
    write_results(cfg, results, out_dir or cfg.output_dir)
    return results


@dataclass
class SweepResult:
    cells: list[SweepCell]
    selected_alpha: float
    flagged: bool
    results: dict  # alpha -> list[RunResult]


def run_sweep(cfg: ExperimentConfig, out_dir=None, workers: int = 1,
              oracle: EvaluationSet | None = None, lower_is_better: bool = True) -> SweepResult:
    if oracle is None:
        oracle = load_oracle(cfg)
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells, by_alpha = [], {}
    for i, alpha in enumerate(cfg.alpha_grid):
        log.info("sweep %s: alpha=%g", cfg.name, alpha)
        results = execute_batch(cfg, alpha, oracle, workers)
        write_results(cfg, results, out / f"alpha_{i:02d}")
        cells.append(run_scores(results))
        by_alpha[alpha] = results
    selected = select_step_size(cells, lower_is_better)
    flagged = selection_flagged(cells)
    write_csv(
        out / "sweep.csv",
        ["alpha", "mean_final", "stderr", "failures", "num_runs", "selected"],
        [(c.alpha, c.mean, c.stderr, c.failures, c.num_runs, c.alpha == selected) for c in cells],
        cfg.config_hash(),
    )
    # top-level summary mirrors the selected cell so sweep dirs feed the report
    write_results(cfg, by_alpha[selected], out, flagged=flagged)
    return SweepResult(cells, selected, flagged, by_alpha)
