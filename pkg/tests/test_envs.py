import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dase.envs import ENVIRONMENTS, Pendulum, PointMass, make_env, wrap_angle


@pytest.mark.parametrize("name", sorted(ENVIRONMENTS))
def test_reset_is_seeded(name):
    a = make_env(name).reset(seed=4)
    b = make_env(name).reset(seed=4)
    assert np.array_equal(a, b)


def test_pendulum_initial_ranges():
    env = Pendulum()
    for seed in range(200):
        env.reset(seed)
        assert -math.pi <= env.theta <= math.pi and -1.0 <= env.theta_dot <= 1.0


def test_pointmass_initial_in_arena():
    env = PointMass()
    for seed in range(200):
        env.reset(seed)
        assert np.all(np.abs(env.pos) <= 1.0) and not env.vel.any()


def test_pendulum_upright_equilibrium():
    env = Pendulum()
    env.reset(0)
    env.set_state(0.0, 0.0)
    obs, r, done = env.step([0.0])
    assert (env.theta, env.theta_dot) == (0.0, 0.0)
    assert r == 0.0 and not done
    np.testing.assert_array_equal(obs, [1.0, 0.0, 0.0])


def test_pendulum_hanging_equilibrium():
    env = Pendulum()
    env.reset(0)
    env.set_state(math.pi, 0.0)
    for _ in range(10):
        env.step([0.0])
    assert env.theta == math.pi
    assert abs(env.theta_dot) < 1e-13


def test_pendulum_one_step_by_hand():
    env = Pendulum()
    env.reset(0)
    env.set_state(0.3, -0.5)
    _, r, _ = env.step([0.25])
    u = 0.5
    assert r == pytest.approx(-(0.09 + 0.1 * 0.25 + 0.001 * u * u), abs=1e-15)
    assert env.theta == pytest.approx(0.3 - 0.05 * 0.5, abs=1e-15)
    assert env.theta_dot == pytest.approx(-0.5 + 0.05 * (15.0 * math.sin(0.3) + 3.0 * u), abs=1e-15)


def test_pendulum_speed_and_action_clipped():
    env = Pendulum()
    env.reset(0)
    env.set_state(1.0, 7.99)
    env.step([5.0])
    assert env.theta_dot == 8.0
    env.set_state(0.0, 0.0)
    _, r, _ = env.step([5.0])  # clipped to 1 -> u = 2
    assert r == pytest.approx(-0.004, abs=1e-15)


def test_pointmass_done_at_goal():
    env = PointMass()
    env.reset(0)
    env.set_state([0.5, 0.5], [0.0, 0.0])
    _, r, done = env.step([0.0, 0.0])
    assert done and r == 0.0
    with pytest.raises(RuntimeError):
        env.step([0.0, 0.0])


def test_pointmass_wall_stops_motion():
    env = PointMass()
    env.reset(0)
    env.set_state([0.99, 0.0], [1.0, 0.0])
    env.step([1.0, 0.0])
    assert env.pos[0] == 1.0 and env.vel[0] == 0.0


def test_action_dimension_checked():
    env = make_env("pendulum", 0)
    env.reset()
    with pytest.raises(ValueError):
        env.step([0.0, 0.0])
    env = make_env("pointmass", 0)
    env.reset()
    with pytest.raises(ValueError):
        env.step([0.0])
    with pytest.raises(ValueError):
        make_env("cartpole")


def test_wrap_angle():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    assert wrap_angle(0.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-3, 3), min_size=1, max_size=200))
def test_pendulum_stays_finite_and_bounded(seed, actions):
    env = Pendulum()
    env.reset(seed)
    for a in actions:
        obs, r, _ = env.step([a])
        assert np.isfinite(obs).all() and math.isfinite(r)
        assert abs(obs[2]) <= 8.0
        assert r <= 0.0 and r >= -(math.pi**2 + 6.4 + 0.004)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_zero_torque_energy_drift_bounded(seed):
    # E = thd^2 / 6 + 5 cos(th) is conserved by the continuous dynamics; one explicit
    # Euler step changes it by at most dt^2 * (thdd^2 / 6 + 5 thd^2 / 2)
    env = Pendulum()
    env.reset(seed)
    dt = env.dt

    def energy():
        return env.theta_dot**2 / 6.0 + 5.0 * math.cos(env.theta)

    for _ in range(200):
        e0, thd, thdd = energy(), env.theta_dot, 15.0 * math.sin(env.theta)
        env.step([0.0])
        if abs(env.theta_dot) < 8.0:
            assert abs(energy() - e0) <= dt**2 * (thdd**2 / 6.0 + 2.5 * thd**2) + 1e-12
