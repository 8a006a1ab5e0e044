"""Fully incremental online learners: TD(lambda) and epsilon-greedy Sarsa(lambda).

Each step touches one transition, in order, and keeps only the parameter
vector and an accumulating eligibility trace of the same length.  Gradients
and both value estimates in the TD error use the pre-update parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

DIVERGENCE_THRESHOLD = 1e8


class DivergenceError(RuntimeError):
    def __init__(self, message, step=None, episode=None):
        super().__init__(message)
        self.step = step
        self.episode = episode


@dataclass
class AgentConfig:
    alpha: float
    gamma: float = 1.0
    lam: float = 0.0
    epsilon: float = 0.1

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        for name in ("gamma", "lam", "epsilon"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class StepDiagnostics:
    delta: float
    trace_norm: float
    value_estimate: float
    step: int = 0


@dataclass
class Pipeline:
    transform: Callable
    model: object

    def features(self, state):
        return self.transform(state)

    def values(self, state) -> np.ndarray:
        return self.model(self.transform(state))

    def new_trace(self) -> EligibilityTrace:
        return EligibilityTrace(self.model.num_params())


class EligibilityTrace:
    """Accumulating trace ``z`` with a factored form for lambda*gamma = 0.

    When the decay is zero the trace equals one gradient, which the model can
    apply directly from a few factors (hidden activations and their
    derivatives) without ever building the dense vector.  ``z`` materializes
    it on demand, so the observable trace is the same either way.
    """

    def __init__(self, n: int):
        self._dense = np.zeros(n)
        self._factored = None  # (model, x, head, factors)

    @property
    def z(self) -> np.ndarray:
        if self._factored is not None:
            model, x, head, factors = self._factored
            self._dense = model.gradient_from_factors(x, head, factors)
            self._factored = None
        return self._dense

    def reset(self):
        self._factored = None
        self._dense.fill(0.0)


def _semi_gradient_update(model, z, x, head, reward, next_value, discount, cfg, trace_discount, step):
    decay = cfg.gamma * trace_discount * cfg.lam
    gamma_eff = cfg.gamma * discount
    target = reward + (gamma_eff * next_value if gamma_eff != 0.0 else 0.0)
    if isinstance(z, EligibilityTrace) and decay == 0.0:
        delta, value, factors = model.fused_update(x, head, target, cfg.alpha, DIVERGENCE_THRESHOLD)
        z._factored = (model, x, head, factors)
        _check_delta(delta, step)
        return StepDiagnostics(delta, float(np.sqrt(model.factored_norm_sq(x, factors))), value, step)
    if isinstance(z, EligibilityTrace):
        z = z.z
    z *= decay
    value = model.add_gradient(x, head, z)
    delta = target - value
    _check_delta(delta, step)
    if cfg.alpha * delta != 0.0:
        model.w += (cfg.alpha * delta) * z
    return StepDiagnostics(delta, float(np.sqrt(z @ z)), value, step)


def _check_delta(delta, step):
    if not np.isfinite(delta) or abs(delta) > DIVERGENCE_THRESHOLD:
        raise DivergenceError(f"TD error {delta!r} at step {step}", step=step)


def td_lambda_step(
    model,
    z,
    x,
    reward: float,
    x_next,
    discount: float,
    cfg: AgentConfig,
    trace_discount: float = 1.0,
    step: int = 0,
    next_value: float | None = None,
) -> StepDiagnostics:
    """One TD(lambda) update of ``model`` (head 0) and ``z``, both in place.

    ``z`` is a plain trace array or an :class:`EligibilityTrace`.
    ``discount`` is the transition's own discount (0 at termination) and is
    multiplied by ``cfg.gamma``.  ``trace_discount`` is the discount of the
    transition that led into ``x``; it decays the trace together with
    ``cfg.gamma * cfg.lam``.
    """
    if next_value is None:
        next_value = 0.0 if discount == 0.0 else float(model(x_next)[0])
    return _semi_gradient_update(model, z, x, 0, reward, next_value, discount, cfg, trace_discount, step)


def sarsa_lambda_step(
    model,
    z,
    x,
    action: int,
    reward: float,
    x_next,
    next_action: int | None,
    discount: float,
    cfg: AgentConfig,
    step: int = 0,
    next_value: float | None = None,
) -> StepDiagnostics:
    """One Sarsa(lambda) update; ``next_action`` is ignored when discount is 0."""
    if next_value is None:
        next_value = 0.0 if discount == 0.0 else float(model(x_next)[next_action])
    return _semi_gradient_update(model, z, x, action, reward, next_value, discount, cfg, 1.0, step)


def epsilon_greedy(q_values, epsilon: float, rng: np.random.Generator) -> int:
    q = np.asarray(q_values)
    if q.size == 0:
        raise ValueError("no action values")
    if rng.random() < epsilon:
        return int(rng.integers(q.size))
    best = np.flatnonzero(q == q.max())
    if best.size == 1:
        return int(best[0])
    return int(best[rng.integers(best.size)])


def epsilon_greedy_probabilities(q_values, epsilon: float) -> np.ndarray:
    q = np.asarray(q_values, dtype=float)
    best = q == q.max()
    return epsilon / q.size + (1.0 - epsilon) * best / best.sum()


@dataclass
class EpisodeRecord:
    steps: int
    ret: float
    mean_abs_delta: float
    truncated: bool


def run_prediction_episode(env, policy, pipeline: Pipeline, cfg: AgentConfig, rng) -> EpisodeRecord:
    """TD(lambda) evaluation of ``policy`` over one episode."""
    z = pipeline.new_trace()
    state = env.reset(rng)
    x = pipeline.features(state)
    steps, ret, abs_delta = 0, 0.0, 0.0
    while True:
        tr = env.step(policy(state, rng))
        x_next = pipeline.features(tr.next_state)
        try:
            diag = td_lambda_step(pipeline.model, z, x, tr.reward, x_next, tr.discount, cfg, step=steps)
        except DivergenceError as err:
            err.step = steps
            raise
        steps += 1
        ret += tr.reward
        abs_delta += abs(diag.delta)
        if tr.terminal or tr.truncated:
            return EpisodeRecord(steps, ret, abs_delta / steps, tr.truncated)
        state, x = tr.next_state, x_next


def run_control_episode(env, pipeline: Pipeline, cfg: AgentConfig, rng) -> EpisodeRecord:
    """Epsilon-greedy Sarsa(lambda) over one episode."""
    model = pipeline.model
    z = pipeline.new_trace()
    state = env.reset(rng)
    x = pipeline.features(state)
    action = epsilon_greedy(model(x), cfg.epsilon, rng)
    steps, ret, abs_delta = 0, 0.0, 0.0
    while True:
        tr = env.step(action)
        x_next = pipeline.features(tr.next_state)
        if tr.terminal:
            next_action, next_value = None, 0.0
        else:
            q_next = model(x_next)
            next_action = epsilon_greedy(q_next, cfg.epsilon, rng)
            next_value = float(q_next[next_action])
        diag = sarsa_lambda_step(
            model, z, x, action, tr.reward, x_next, next_action, tr.discount, cfg,
            step=steps, next_value=next_value,
        )
        steps += 1
        ret += tr.reward
        abs_delta += abs(diag.delta)
        if tr.terminal or tr.truncated:
            return EpisodeRecord(steps, ret, abs_delta / steps, tr.truncated)
        x, action = x_next, next_action


def run_continuing_prediction(
    env,
    behavior,
    pipeline: Pipeline,
    cfg: AgentConfig,
    rng,
    num_steps: int,
    on_checkpoint: Callable[[int], None] | None = None,
    checkpoint_every: int | None = None,
) -> float:
    """Uncorrected semi-gradient TD(lambda) on a continuing task driven by
    ``behavior``; the environment's per-transition discount carries the
    termination signal.  Returns the mean |delta|."""
    z = pipeline.new_trace()
    state = env.reset(rng)
    x = pipeline.features(state)
    trace_discount = 0.0
    abs_delta = 0.0
    if on_checkpoint is not None:
        on_checkpoint(0)
    for t in range(num_steps):
        tr = env.step(behavior(rng))
        x_next = pipeline.features(tr.next_state)
        diag = td_lambda_step(
            pipeline.model, z, x, tr.reward, x_next, tr.discount, cfg,
            trace_discount=trace_discount, step=t,
        )
        abs_delta += abs(diag.delta)
        trace_discount = tr.discount
        x = x_next
        if on_checkpoint is not None and checkpoint_every and (t + 1) % checkpoint_every == 0:
            on_checkpoint(t + 1)
    return abs_delta / max(num_steps, 1)
