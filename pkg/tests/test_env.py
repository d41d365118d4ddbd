import math

import numpy as np
import pytest

from goaljump import exceptions
from goaljump.env import (IoHistory, JumpEnv, Measurement, Termination, check_termination, observation_dims,
                          sample_goal, task_error)
from goaljump.files import TraceColumns
from goaljump.models.goal import Goal, GoalMode


def measurement(height=0.9, foot_heights=(0.0, 0.0), x=0.0, pitch=0.0, strike=False) -> Measurement:
    return Measurement(position=np.array([x, height]), height=height, foot_heights=np.array(foot_heights),
                       pitch=pitch, strike=strike)


def hold_reference(env: JumpEnv, steps: int):
    transitions = []
    for _ in range(steps):
        transitions.append(env.step(env.reference.motors_at(env.ref_step)))
        if transitions[-1].done:
            break
    return transitions


def test_observation_dims(config):
    dims = observation_dims(config)
    assert (dims.goal, dims.preview, dims.entry, dims.short, dims.long) == (4, 13, 15, 4, 66)
    assert dims.privileged == 53
    assert dims.critic == 90


def test_io_history_padding():
    history = IoHistory(3, np.arange(11.0))
    assert history.array().shape == (3, 15)
    np.testing.assert_array_equal(history.array()[:, 11:], 0.0)
    history.push(np.ones(11), np.full(4, 2.0))
    np.testing.assert_array_equal(history.array()[-1, 11:], 2.0)
    np.testing.assert_array_equal(history.array()[0], np.concatenate([np.arange(11.0), np.zeros(4)]))


def test_step_before_reset(small_config):
    env = JumpEnv(small_config, 1)
    with pytest.raises(exceptions.EpisodeTerminatedError):
        env.step(np.zeros(4))


def test_bad_mode(small_config):
    with pytest.raises(exceptions.ConfigError):
        JumpEnv(small_config, 2, mode="stairs")


def test_first_observation(small_config, dims):
    env = JumpEnv(small_config, 1)
    obs = env.reset()
    assert obs.goal.shape == (4,)
    assert obs.preview.shape == (dims.preview,)
    assert obs.short_history.shape == (4, 15)
    assert obs.long_history.shape == (66, 15)
    assert obs.privileged.shape == (53,)
    assert obs.critic.shape == (dims.critic,)
    np.testing.assert_array_equal(obs.current, obs.short_history[-1])


def test_stage_one_jumps_at_once(small_config):
    env = JumpEnv(small_config, 1)
    env.reset()
    assert env.ref_step == 0
    assert env.goal == Goal()


def test_later_stages_start_standing(small_config):
    env = JumpEnv(small_config, 2)
    env.reset()
    assert env.ref_step == env.reference.n_samples
    assert env.clock > env.reference.duration
    assert env.goal == Goal()


def test_tracking_the_reference_runs_to_timeout(small_config):
    env = JumpEnv(small_config, 1, record=True)
    env.reset()
    transitions = hold_reference(env, 20)
    assert len(transitions) == 8
    assert all(not t.done for t in transitions[:-1])
    assert transitions[-1].termination == Termination.timeout
    assert transitions[-1].truncated
    assert all(0.0 <= t.reward <= 1.0 for t in transitions)
    assert all(t.components.shape == (12,) for t in transitions)
    assert len(env.trace) == 8
    assert set(TraceColumns.all) <= set(env.trace[0])
    with pytest.raises(exceptions.EpisodeTerminatedError):
        env.step(np.zeros(4))


def test_invalid_actions(small_config):
    env = JumpEnv(small_config, 1)
    env.reset()
    with pytest.raises(exceptions.DimensionError):
        env.step(np.zeros(3))
    with pytest.raises(exceptions.NonFiniteError):
        env.step(np.array([0.0, math.nan, 0.0, 0.0]))


def test_episodes_are_reproducible(small_config):
    def run(worker):
        env = JumpEnv(small_config, 3, seed=11, worker=worker)
        obs = [env.reset(episode=4)]
        for t in hold_reference(env, 3):
            obs.append(t.observation)
        return env, obs

    env_a, a = run(0)
    env_b, b = run(0)
    env_c, _ = run(1)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.critic, y.critic)
        np.testing.assert_array_equal(x.long_history, y.long_history)
    assert env_a.meta() == env_b.meta()
    assert not np.array_equal(env_a.privileged, env_c.privileged)


def test_stage_three_randomizes(small_config):
    nominal = JumpEnv(small_config, 2, seed=2)
    nominal.reset()
    env = JumpEnv(small_config, 3, seed=2)
    env.reset()
    assert not np.array_equal(env.privileged, nominal.privileged)
    np.testing.assert_array_equal(nominal.robot.link_masses, small_config.robot.link_masses)
    assert not np.array_equal(env.robot.link_masses, small_config.robot.link_masses)


def test_explicit_goal_on_terrain(small_config):
    env = JumpEnv(small_config, 2, mode=GoalMode.terrain)
    obs = env.reset(goal=Goal(c_x=1.0, c_z=0.2))
    assert env.ref_step == 0
    np.testing.assert_array_equal(obs.goal, [1.0, 0.0, 0.2, 0.0])
    assert env.terrain.height(0.0) == 0.0
    assert env.terrain.height(0.6) == pytest.approx(0.2)


def test_sample_goal(config):
    rng = np.random.default_rng(0)
    assert sample_goal(config.episode(1), GoalMode.flat, rng) == Goal()
    assert sample_goal(config.episode(2, single_goal=True), GoalMode.terrain, rng) == Goal()
    ranges = config.env.goal_ranges
    for _ in range(200):
        goal = sample_goal(config.episode(2), GoalMode.flat, rng)
        assert ranges.c_x[0] <= goal.c_x <= ranges.c_x[1]
        assert goal.c_y == goal.c_z == goal.c_phi == 0.0
        goal = sample_goal(config.episode(3), GoalMode.terrain, rng)
        assert goal.c_y == goal.c_phi == 0.0
        if abs(goal.c_x) < ranges.min_step_run:
            assert goal.c_z == 0.0
    with pytest.raises(ValueError):
        sample_goal(config.episode(2), "stairs", rng)


def test_task_error():
    position, orientation = task_error(measurement(x=0.7, pitch=-0.2), Goal(c_x=1.0))
    assert position == pytest.approx(0.3)
    assert orientation == pytest.approx(0.2)


class TestTermination:

    def test_fall(self, config, reference):
        cfg = config.episode(2)
        assert check_termination(measurement(height=0.5), Goal(), reference, 0.0, cfg, 1, 0.0) == Termination.fall
        assert check_termination(measurement(strike=True), Goal(), reference, 0.0, cfg, 1, 0.0) == Termination.fall

    def test_foot_bound_during_the_jump(self, config, reference):
        cfg = config.episode(1)
        lifted = measurement(foot_heights=(0.3, 0.0))
        assert check_termination(lifted, Goal(), reference, 0.0, cfg, 1, 0.0) == Termination.foot_bound
        assert check_termination(lifted, Goal(), reference, 0.0, cfg, 1, 0.0, evaluation=True) == Termination.none

    def test_task_bound_after_the_grace_period(self, config, reference):
        cfg = config.episode(2)
        t = reference.duration + 0.1
        off = measurement(x=0.5)
        assert check_termination(off, Goal(), reference, t, cfg, 1, 0.1) == Termination.none
        assert check_termination(off, Goal(), reference, t, cfg, 1, 0.3) == Termination.task_bound
        tilted = measurement(pitch=math.radians(40.0))
        assert check_termination(tilted, Goal(), reference, t, cfg, 1, 0.3) == Termination.task_bound
        assert check_termination(measurement(x=0.5), Goal(c_x=0.5), reference, t, cfg, 1, 0.3) == Termination.none

    def test_timeout(self, config, reference):
        cfg = config.episode(2)
        assert check_termination(measurement(), Goal(), reference, 0.0, cfg, cfg.max_steps, 0.0) == Termination.timeout
        assert check_termination(measurement(), Goal(), reference, 0.0, cfg, 5, 0.0, max_steps=5) == Termination.timeout
        assert check_termination(measurement(), Goal(), reference, 0.0, cfg, 4, 0.0, max_steps=5) == Termination.none
