import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emecs_rl import envs
from emecs_rl.envs import (
    ACROBOT_BOUNDS,
    MC_BOUNDS,
    Acrobot,
    InvalidActionError,
    MountainCar,
    SyntheticCollision,
    Transition,
)


def _mc_reference(p, v, a):
    v = min(max(v + 0.001 * (a - 1) - 0.0025 * math.cos(3 * p), -0.07), 0.07)
    p = min(max(p + v, -1.2), 0.6)
    if p == -1.2:
        v = 0.0
    return p, v


class TestMountainCar:
    def test_reset_in_start_region(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            s = envs.mc_reset(rng)
            assert -0.6 <= s[0] <= -0.4 and s[1] == 0.0

    def test_reset_deterministic(self):
        a = envs.mc_reset(np.random.default_rng(11))
        b = envs.mc_reset(np.random.default_rng(11))
        assert np.array_equal(a, b)

    def test_reset_mean(self):
        rng = np.random.default_rng(0)
        pos = [envs.mc_reset(rng)[0] for _ in range(10_000)]
        assert abs(np.mean(pos) + 0.5) < 0.01

    def test_step_from_origin_neutral(self):
        tr = envs.mc_step(np.array([0.0, 0.0]), 1)
        assert tr.next_state[1] == pytest.approx(-0.0025, abs=1e-15)
        assert tr.next_state[0] == pytest.approx(-0.0025, abs=1e-15)
        assert tr.reward == -1.0 and not tr.terminal and tr.discount == 1.0

    def test_step_reaches_goal(self):
        tr = envs.mc_step(np.array([0.49, 0.02]), 2)
        assert tr.next_state[1] == pytest.approx(0.020748, abs=1e-6)
        assert tr.next_state[0] == pytest.approx(0.510748, abs=1e-6)
        assert tr.terminal and tr.discount == 0.0

    def test_left_wall_zeroes_velocity(self):
        tr = envs.mc_step(np.array([-1.2, -0.07]), 0)
        assert tr.next_state[0] == -1.2 and tr.next_state[1] == 0.0

    @pytest.mark.parametrize("action", [-1, 3, 1.5])
    def test_invalid_action(self, action):
        with pytest.raises(InvalidActionError):
            envs.mc_step(np.array([0.0, 0.0]), action)

    @pytest.mark.parametrize("v,a", [(0.01, 2), (-0.01, 0), (0.0, 2)])
    def test_fixed_policy(self, v, a):
        assert envs.mc_fixed_policy(np.array([-0.5, v])) == a

    @given(st.floats(-1.2, 0.6), st.floats(-0.07, 0.07), st.integers(0, 2))
    def test_matches_reference_dynamics(self, p, v, a):
        tr = envs.mc_step(np.array([p, v]), a)
        assert tuple(tr.next_state) == pytest.approx(_mc_reference(p, v, a), abs=1e-15)

    def test_truncation_at_cap(self):
        env = MountainCar(max_steps=5)
        env.reset(np.random.default_rng(0))
        trs = [env.step(1) for _ in range(5)]
        assert not any(t.truncated for t in trs[:4])
        assert trs[4].truncated and not trs[4].terminal and trs[4].discount == 1.0


class TestAcrobot:
    def test_reset_range(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            s = envs.acrobot_reset(rng)
            assert s.shape == (4,) and np.all(np.abs(s) <= 0.1)

    def test_rest_not_terminal(self):
        tr = envs.acrobot_step(np.zeros(4), 1)
        assert not tr.terminal and tr.reward == -1.0
        assert np.allclose(tr.next_state, 0.0)

    def test_terminal_predicate(self):
        assert envs.acrobot_terminal(np.array([math.pi, 0.0, 0.0, 0.0]))
        assert not envs.acrobot_terminal(np.zeros(4))

    def test_invalid_action(self):
        with pytest.raises(InvalidActionError):
            envs.acrobot_step(np.zeros(4), 5)

    def test_cap_at_500(self):
        env = Acrobot(max_steps=500)
        env.reset(np.random.default_rng(0))
        n = 0
        while True:
            tr = env.step(1)
            n += 1
            if tr.terminal or tr.truncated:
                break
        assert n <= 500


class TestSynthetic:
    def _env_at(self, d):
        env = SyntheticCollision()
        env.reset(np.random.default_rng(0))
        env.distance = d
        return env

    def test_bump(self):
        tr = self._env_at(1).step(envs.SYNTH_FORWARD)
        assert tr.reward == 1.0 and tr.discount == 0.0
        assert not tr.terminal and not tr.truncated

    def test_forward_away_from_wall(self):
        env = self._env_at(5)
        tr = env.step(envs.SYNTH_FORWARD)
        assert tr.reward == 0.0 and tr.discount == 0.97
        assert env.distance == 4

    def test_behavior_frequency(self):
        rng = np.random.default_rng(0)
        fwd = np.mean([envs.synth_behavior(rng) == envs.SYNTH_FORWARD for _ in range(10_000)])
        assert abs(fwd - 0.9) < 0.01

    def test_target_always_forward(self):
        assert envs.synth_target() == envs.SYNTH_FORWARD

    def test_render_shape_and_range(self):
        rng = np.random.default_rng(1)
        for d in range(1, 21):
            x = envs.synth_render(d, rng)
            assert x.shape == (150,) and x.min() >= 0.0 and x.max() <= 1.0

    def test_invalid_action(self):
        with pytest.raises(InvalidActionError):
            self._env_at(3).step(2)


def test_transition_invariants():
    s = np.zeros(2)
    with pytest.raises(ValueError):
        Transition(s, 0, -1.0, s, terminal=True, truncated=True, discount=0.0)
    with pytest.raises(ValueError):
        Transition(s, 0, -1.0, s, terminal=True, discount=1.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fuzz_bounds_and_rewards(seed):
    rng = np.random.default_rng(seed)
    cases = [
        (MountainCar(max_steps=1000), MC_BOUNDS),
        (Acrobot(max_steps=500), ACROBOT_BOUNDS),
        (SyntheticCollision(), SyntheticCollision.bounds),
    ]
    for env, bounds in cases:
        s = env.reset(rng)
        for _ in range(500):
            tr = env.step(int(rng.integers(env.num_actions)))
            assert np.all(tr.next_state >= bounds[:, 0]) and np.all(tr.next_state <= bounds[:, 1])
            if env.episodic:
                assert tr.reward == -1.0
                assert (tr.discount == 0.0) == tr.terminal
            else:
                assert tr.discount in (0.0, 0.97)
            s = env.reset(rng) if (tr.terminal or tr.truncated) else tr.next_state
        assert s is not None


def test_determinism_bit_exact():
    def trajectory(env_cls):
        rng = np.random.default_rng(42)
        env = env_cls()
        out = [env.reset(rng).copy()]
        acts = np.random.default_rng(7).integers(0, env.num_actions, 200)
        for a in acts:
            tr = env.step(int(a))
            out.append(tr.next_state.copy())
            if tr.terminal:
                out.append(env.reset(rng).copy())
        return np.concatenate(out)

    for cls in (MountainCar, Acrobot, SyntheticCollision):
        assert np.array_equal(trajectory(cls), trajectory(cls))


def test_make_env():
    assert isinstance(envs.make_env("acrobot", max_steps=10), Acrobot)
    with pytest.raises(ValueError):
        envs.make_env("cartpole")
