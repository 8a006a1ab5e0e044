"""Classic-control environments and their reference policies.

Every environment exposes ``reset(rng) -> state`` and ``step(action) ->
Transition``.  Mountain Car and Acrobot are also available as pure
``*_step(state, action)`` functions so the dynamics can be tested in isolation.

Actions are encoded uniformly across tasks as 0 (reverse / negative torque),
1 (neutral) and 2 (forward / positive torque).  The synthetic collision task
uses 0 (forward) and 1 (turn).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InvalidActionError(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool = False
    truncated: bool = False
    discount: float = 1.0

    def __post_init__(self):
        if self.terminal and self.truncated:
            raise ValueError("a transition cannot be both terminal and truncated")
        if self.terminal and self.discount != 0.0:
            raise ValueError("terminal transitions must carry discount 0")


def _check_action(action, num_actions):
    if not (isinstance(action, (int, np.integer)) and 0 <= action < num_actions):
        raise InvalidActionError(f"action {action!r} not in range(0, {num_actions})")
    return int(action)


# ---------------------------------------------------------------- Mountain Car

MC_POS_BOUNDS = (-1.2, 0.6)
MC_VEL_BOUNDS = (-0.07, 0.07)
MC_GOAL = 0.5
MC_BOUNDS = np.array([MC_POS_BOUNDS, MC_VEL_BOUNDS])


def mc_reset(rng: np.random.Generator) -> np.ndarray:
    return np.array([rng.uniform(-0.6, -0.4), 0.0])


def mc_step(state, action: int) -> Transition:
    action = _check_action(action, 3)
    position, velocity = float(state[0]), float(state[1])
    velocity += 0.001 * (action - 1) - 0.0025 * np.cos(3.0 * position)
    velocity = min(max(velocity, MC_VEL_BOUNDS[0]), MC_VEL_BOUNDS[1])
    position += velocity
    position = min(max(position, MC_POS_BOUNDS[0]), MC_POS_BOUNDS[1])
    if position == MC_POS_BOUNDS[0]:
        velocity = 0.0
    terminal = position >= MC_GOAL
    return Transition(
        state=np.asarray(state, dtype=float),
        action=action,
        reward=-1.0,
        next_state=np.array([position, velocity]),
        terminal=terminal,
        discount=0.0 if terminal else 1.0,
    )


def mc_fixed_policy(state, rng=None) -> int:
    """Push in the direction of the velocity; zero velocity pushes forward."""
    return 2 if state[1] >= 0 else 0


# --------------------------------------------------------------------- Acrobot

ACROBOT_MAX_VEL_1 = 4 * np.pi
ACROBOT_MAX_VEL_2 = 9 * np.pi
ACROBOT_BOUNDS = np.array(
    [
        [-np.pi, np.pi],
        [-np.pi, np.pi],
        [-ACROBOT_MAX_VEL_1, ACROBOT_MAX_VEL_1],
        [-ACROBOT_MAX_VEL_2, ACROBOT_MAX_VEL_2],
    ]
)
_DT = 0.2
_LINK_LENGTH_1 = 1.0
_LINK_MASS_1 = 1.0
_LINK_MASS_2 = 1.0
_LINK_COM_1 = 0.5
_LINK_COM_2 = 0.5
_LINK_MOI = 1.0
_G = 9.8


def _wrap(x, lo=-np.pi, hi=np.pi):
    span = hi - lo
    while x > hi:
        x -= span
    while x < lo:
        x += span
    return x


def _acrobot_dsdt(s):
    m1, m2 = _LINK_MASS_1, _LINK_MASS_2
    l1, lc1, lc2 = _LINK_LENGTH_1, _LINK_COM_1, _LINK_COM_2
    i1 = i2 = _LINK_MOI
    a = s[4]
    theta1, theta2, dtheta1, dtheta2 = s[0], s[1], s[2], s[3]
    d1 = m1 * lc1**2 + m2 * (l1**2 + lc2**2 + 2 * l1 * lc2 * np.cos(theta2)) + i1 + i2
    d2 = m2 * (lc2**2 + l1 * lc2 * np.cos(theta2)) + i2
    phi2 = m2 * lc2 * _G * np.cos(theta1 + theta2 - np.pi / 2.0)
    phi1 = (
        -m2 * l1 * lc2 * dtheta2**2 * np.sin(theta2)
        - 2 * m2 * l1 * lc2 * dtheta2 * dtheta1 * np.sin(theta2)
        + (m1 * lc1 + m2 * l1) * _G * np.cos(theta1 - np.pi / 2)
        + phi2
    )
    ddtheta2 = (a + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1**2 * np.sin(theta2) - phi2) / (
        m2 * lc2**2 + i2 - d2**2 / d1
    )
    ddtheta1 = -(d2 * ddtheta2 + phi1) / d1
    return np.array([dtheta1, dtheta2, ddtheta1, ddtheta2, 0.0])


def _rk4(s, dt):
    k1 = _acrobot_dsdt(s)
    k2 = _acrobot_dsdt(s + dt / 2.0 * k1)
    k3 = _acrobot_dsdt(s + dt / 2.0 * k2)
    k4 = _acrobot_dsdt(s + dt * k3)
    return s + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def acrobot_reset(rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(-0.1, 0.1, size=4)


def acrobot_terminal(state) -> bool:
    return bool(-np.cos(state[0]) - np.cos(state[1] + state[0]) > 1.0)


def acrobot_step(state, action: int) -> Transition:
    action = _check_action(action, 3)
    torque = float(action - 1)
    ns = _rk4(np.append(np.asarray(state, dtype=float), torque), _DT)[:4]
    ns[0] = _wrap(ns[0])
    ns[1] = _wrap(ns[1])
    ns[2] = min(max(ns[2], -ACROBOT_MAX_VEL_1), ACROBOT_MAX_VEL_1)
    ns[3] = min(max(ns[3], -ACROBOT_MAX_VEL_2), ACROBOT_MAX_VEL_2)
    terminal = acrobot_terminal(ns)
    return Transition(
        state=np.asarray(state, dtype=float),
        action=action,
        reward=-1.0,
        next_state=ns,
        terminal=terminal,
        discount=0.0 if terminal else 1.0,
    )


# --------------------------------------------------- synthetic collision task

SYNTH_DIM = 150
SYNTH_MAX_DISTANCE = 20
SYNTH_GAMMA = 0.97
SYNTH_NOISE = 0.02
SYNTH_FORWARD, SYNTH_TURN = 0, 1
_SYNTH_RENDER_SEED = 20180717


def _synth_palette():
    rng = np.random.default_rng(_SYNTH_RENDER_SEED)
    background = rng.uniform(0.15, 0.45, size=SYNTH_DIM)
    wall = rng.uniform(0.55, 0.95, size=SYNTH_DIM)
    # centre pixels see the wall first; per-pixel gain in (0, 1]
    pixel = np.repeat(np.arange(50), 3)
    gain = np.exp(-(((pixel - 24.5) / 18.0) ** 2))
    return background, wall, gain


_BACKGROUND, _WALL, _GAIN = _synth_palette()


def synth_render(distance: int, rng: np.random.Generator | None = None) -> np.ndarray:
    """150 'pixels' in [0, 1] for a wall ``distance`` forward steps away."""
    closeness = 1.0 - (distance - 1) / (SYNTH_MAX_DISTANCE - 1)
    mix = np.clip(closeness * _GAIN * 1.2, 0.0, 1.0)
    obs = (1.0 - mix) * _BACKGROUND + mix * _WALL
    if rng is not None:
        obs = obs + rng.uniform(-SYNTH_NOISE, SYNTH_NOISE, size=SYNTH_DIM)
    return np.clip(obs, 0.0, 1.0)


def synth_behavior(rng: np.random.Generator) -> int:
    """Forward 90% of the time, turn 10%."""
    return SYNTH_FORWARD if rng.random() < 0.9 else SYNTH_TURN


def synth_target(state=None, rng=None) -> int:
    return SYNTH_FORWARD


def synth_true_return(distance: int) -> float:
    """Return under the always-forward target policy from ``distance``."""
    return SYNTH_GAMMA ** (distance - 1)


# ---------------------------------------------------------------- env objects


class MountainCar:
    state_dim = 2
    num_actions = 3
    bounds = MC_BOUNDS
    episodic = True

    def __init__(self, max_steps: int | None = None):
        self.max_steps = max_steps
        self.state = None
        self.t = 0

    def reset(self, rng):
        self.state = mc_reset(rng)
        self.t = 0
        return self.state

    def step(self, action):
        tr = mc_step(self.state, action)
        return self._advance(tr)

    def _advance(self, tr):
        self.t += 1
        if not tr.terminal and self.max_steps is not None and self.t >= self.max_steps:
            tr = Transition(tr.state, tr.action, tr.reward, tr.next_state,
                            terminal=False, truncated=True, discount=tr.discount)
        self.state = tr.next_state
        return tr


class Acrobot(MountainCar):
    state_dim = 4
    bounds = ACROBOT_BOUNDS

    def reset(self, rng):
        self.state = acrobot_reset(rng)
        self.t = 0
        return self.state

    def step(self, action):
        return self._advance(acrobot_step(self.state, action))


class SyntheticCollision:
    """Continuing stand-in for a camera-equipped robot learning to predict bumps.

    A hidden distance ``d`` to the wall shrinks by one on every forward step.
    Reaching the wall is a bump (reward 1, discount 0) after which the robot
    faces a fresh random distance; turning also draws a fresh distance.  All
    other steps give reward 0 and discount 0.97.  Observations are a fixed
    rendering of ``d`` with bounded uniform pixel noise.
    """

    state_dim = SYNTH_DIM
    num_actions = 2
    bounds = np.array([[0.0, 1.0]] * SYNTH_DIM)
    episodic = False
    max_steps = None

    def __init__(self, max_distance: int = SYNTH_MAX_DISTANCE):
        self.max_distance = max_distance
        self.distance = None
        self.state = None
        self.rng = None

    def _new_distance(self):
        return int(self.rng.integers(1, self.max_distance + 1))

    def reset(self, rng):
        self.rng = rng
        self.distance = self._new_distance()
        self.state = synth_render(self.distance, rng)
        return self.state

    def step(self, action):
        action = _check_action(action, 2)
        if action == SYNTH_FORWARD:
            self.distance -= 1
        bump = self.distance == 0
        if bump or action == SYNTH_TURN:
            self.distance = self._new_distance()
        next_state = synth_render(self.distance, self.rng)
        tr = Transition(
            state=self.state,
            action=action,
            reward=1.0 if bump else 0.0,
            next_state=next_state,
            discount=0.0 if bump else SYNTH_GAMMA,
        )
        self.state = next_state
        return tr


ENVIRONMENTS = {
    "mountain_car": MountainCar,
    "acrobot": Acrobot,
    "synthetic_collision": SyntheticCollision,
}


def make_env(env_id: str, **params):
    try:
        cls = ENVIRONMENTS[env_id]
    except KeyError:
        raise ValueError(f"unknown environment {env_id!r}") from None
    return cls(**params)
