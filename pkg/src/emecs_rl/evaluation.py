"""Ground-truth probe sets, error metrics and the step-size study protocol."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .transforms import SparseBinary

FORMAT_VERSION = 1
TRUE_VALUE = "true-value"
SAMPLED_RETURN = "sampled-return"


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class EvaluationSet:
    probes: np.ndarray  # (n, state_dim)
    targets: np.ndarray  # (n,)
    kind: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        probes = np.array(self.probes, dtype=float, ndmin=2)
        targets = np.array(self.targets, dtype=float).reshape(-1)
        if len(targets) == 0:
            raise OracleError("an evaluation set needs at least one probe")
        if len(probes) != len(targets):
            raise OracleError("probe and target counts differ")
        if not np.all(np.isfinite(targets)):
            raise OracleError("targets must be finite")
        if self.kind not in (TRUE_VALUE, SAMPLED_RETURN):
            raise OracleError(f"unknown evaluation set kind {self.kind!r}")
        probes.setflags(write=False)
        targets.setflags(write=False)
        object.__setattr__(self, "probes", probes)
        object.__setattr__(self, "targets", targets)

    def __len__(self):
        return len(self.targets)

    def dumps(self) -> str:
        lines = [
            f"# emecs-evalset v{FORMAT_VERSION}",
            f"# kind={self.kind}",
            f"# provenance={json.dumps(self.provenance, sort_keys=True)}",
            ",".join([f"s{i}" for i in range(self.probes.shape[1])] + ["target"]),
        ]
        for probe, target in zip(self.probes, self.targets):
            lines.append(",".join(repr(float(v)) for v in (*probe, target)))
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dumps())

    @classmethod
    def loads(cls, text: str) -> "EvaluationSet":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# emecs-evalset v"):
            raise OracleError("not an evaluation set file")
        version = int(lines[0].rsplit("v", 1)[1])
        if version != FORMAT_VERSION:
            raise OracleError(f"unsupported evaluation set version {version}")
        kind = lines[1].split("=", 1)[1]
        provenance = json.loads(lines[2].split("=", 1)[1])
        rows = np.array([[float(v) for v in line.split(",")] for line in lines[4:] if line])
        return cls(rows[:, :-1], rows[:, -1], kind, provenance)

    @classmethod
    def load(cls, path) -> "EvaluationSet":
        with open(path, encoding="utf-8") as fh:
            return cls.loads(fh.read())


# -------------------------------------------------------------------- oracles


def rollout_return(env, policy, state, rng, max_steps: int = 1_000_000) -> float:
    """Undiscounted return of ``policy`` from ``state`` to termination."""
    env.state = np.array(state, dtype=float)
    env.t = 0
    total = 0.0
    for _ in range(max_steps):
        tr = env.step(policy(env.state, rng))
        total += tr.reward
        if tr.terminal:
            return total
    raise OracleError(f"policy did not terminate within {max_steps} steps")


def build_rmsve_oracle(env, policy, total_steps: int, sample_count: int, rng, rollouts: int = 1) -> EvaluationSet:
    """Sample ``sample_count`` of the states visited while running ``policy``
    for ``total_steps`` (restarting at termination) and label each with the
    mean return of ``rollouts`` rollouts from it."""
    if sample_count > total_steps:
        raise OracleError(f"only {total_steps} visited states, cannot sample {sample_count}")
    chosen = np.sort(rng.choice(total_steps, size=sample_count, replace=False))
    probes = np.empty((sample_count, env.state_dim))
    state = env.reset(rng)
    j = 0
    for t in range(total_steps):
        if j < sample_count and chosen[j] == t:
            probes[j] = state
            j += 1
            if j == sample_count:
                break
        tr = env.step(policy(state, rng))
        state = env.reset(rng) if (tr.terminal or tr.truncated) else tr.next_state
    order = rng.permutation(sample_count)
    probes = probes[order]
    targets = np.array(
        [np.mean([rollout_return(env, policy, s, rng) for _ in range(rollouts)]) for s in probes]
    )
    provenance = {"total_steps": total_steps, "sample_count": sample_count, "rollouts": rollouts}
    return EvaluationSet(probes, targets, TRUE_VALUE, provenance)


def build_rmsre_oracle(env, behavior, target, pair_count: int, rng, gap=(20, 200)) -> EvaluationSet:
    """(state, return) pairs for a continuing task whose discount drops to 0
    at termination events.  Between pairs the behavior policy runs for a
    uniform random number of steps in ``gap`` (inclusive)."""
    probes, returns = [], []
    state = env.reset(rng)
    for _ in range(pair_count):
        for _ in range(int(rng.integers(gap[0], gap[1] + 1))):
            state = env.step(behavior(rng)).next_state
        probes.append(np.array(state, dtype=float))
        g, weight = 0.0, 1.0
        while True:
            tr = env.step(target(state, rng))
            g += weight * tr.reward
            weight *= tr.discount
            state = tr.next_state
            if tr.discount == 0.0:
                break
        returns.append(g)
    return EvaluationSet(np.array(probes), np.array(returns), SAMPLED_RETURN,
                         {"pair_count": pair_count, "gap": list(gap)})


# -------------------------------------------------------------------- metrics


def feature_matrix(transform, probes) -> np.ndarray:
    rows = []
    for s in probes:
        x = transform(s)
        rows.append(x.to_dense() if isinstance(x, SparseBinary) else x)
    return np.array(rows)


def predict(pipeline, D: EvaluationSet, features: np.ndarray | None = None) -> np.ndarray:
    X = feature_matrix(pipeline.transform, D.probes) if features is None else features
    return pipeline.model.forward_batch(X)[:, 0]


def _rms_error(predictions, targets) -> float:
    diff = np.asarray(predictions, dtype=float) - targets
    return float(np.sqrt(np.mean(diff * diff)))


def rmsve(pipeline, D: EvaluationSet, features: np.ndarray | None = None) -> float:
    if D.kind != TRUE_VALUE:
        raise OracleError("RMSVE needs a true-value evaluation set")
    return _rms_error(predict(pipeline, D, features), D.targets)


def rmsre(pipeline, D: EvaluationSet, features: np.ndarray | None = None) -> float:
    if D.kind != SAMPLED_RETURN:
        raise OracleError("RMSRE needs a sampled-return evaluation set")
    return _rms_error(predict(pipeline, D, features), D.targets)


# ------------------------------------------------------------ run statistics


def aggregate_runs(curves):
    """Pointwise mean, sample std (n-1) and standard error over runs."""
    curves = [np.asarray(c, dtype=float) for c in curves]
    if not curves:
        raise ValueError("no curves to aggregate")
    if len({len(c) for c in curves}) != 1:
        raise ValueError("curves have different lengths")
    data = np.vstack(curves)
    mean = data.mean(axis=0)
    n = len(curves)
    std = data.std(axis=0, ddof=1) if n > 1 else np.zeros_like(mean)
    return mean, std, std / math.sqrt(n)


def final_performance(curve, fraction: float = 0.05) -> float:
    curve = np.asarray(curve, dtype=float)
    if curve.size == 0:
        raise ValueError("empty curve")
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    k = math.ceil(round(fraction * curve.size, 9))
    return float(curve[-k:].mean())


@dataclass
class SweepCell:
    alpha: float
    scores: list  # final performance of each run that did not diverge
    failures: int = 0

    @property
    def num_runs(self) -> int:
        return len(self.scores) + self.failures

    @property
    def mean(self) -> float:
        return float(np.mean(self.scores)) if self.scores else math.nan

    @property
    def stderr(self) -> float:
        if len(self.scores) < 2:
            return 0.0
        return float(np.std(self.scores, ddof=1) / math.sqrt(len(self.scores)))


def select_step_size(cells, lower_is_better: bool = True) -> float:
    """Largest step size whose mean is within two standard errors of the best.

    Only the cells with the fewest failed runs compete, so a step size that
    diverged is never preferred over one that did not.
    """
    cells = list(cells)
    if not cells:
        raise ValueError("no sweep cells")
    fewest = min(c.failures for c in cells)
    pool = [c for c in cells if c.failures == fewest and c.scores]
    if not pool:
        return max(c.alpha for c in cells if c.failures == fewest)
    sign = 1.0 if lower_is_better else -1.0
    best = min(pool, key=lambda c: sign * c.mean)
    close = [c for c in pool if sign * (c.mean - best.mean) <= 2.0 * best.stderr]
    return max(c.alpha for c in close)


def selection_flagged(cells) -> bool:
    """True when every cell had at least one diverged run."""
    return min(c.failures for c in cells) > 0
