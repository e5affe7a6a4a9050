"""Deterministic-physics control tasks with actions bounded to [-1, 1].

Both environments integrate with explicit Euler so a rollout can be replayed
exactly from (seed, action sequence). Episode timeouts are the caller's job.
"""

from __future__ import annotations

import math

import numpy as np


def wrap_angle(theta: float) -> float:
    """Map to (-pi, pi]; -pi itself maps to pi."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


class Env:
    name = "env"
    observation_dim: int
    action_dim: int
    action_bound = 1.0

    def __init__(self, seed: int | None = None):
        self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.terminated = False

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.steps = 0
        self.terminated = False
        self._reset_state()
        return self.observation()

    def step(self, action) -> tuple[np.ndarray, float, bool]:
        if self.terminated:
            raise RuntimeError("step() called on a terminated episode; call reset()")
        a = np.asarray(action, dtype=np.float64).reshape(-1)
        if a.shape != (self.action_dim,):
            raise ValueError(f"{self.name} expects an action of size {self.action_dim}, got {a.shape}")
        a = np.clip(a, -self.action_bound, self.action_bound)
        reward, done = self._advance(a)
        self.steps += 1
        self.terminated = done
        return self.observation(), reward, done

    def _reset_state(self) -> None:
        raise NotImplementedError

    def _advance(self, a: np.ndarray) -> tuple[float, bool]:
        raise NotImplementedError

    def observation(self) -> np.ndarray:
        raise NotImplementedError


class Pendulum(Env):
    """Torque-limited swing-up; theta = 0 is upright."""

    name = "pendulum"
    observation_dim = 3
    action_dim = 1

    g = 10.0
    m = 1.0
    length = 1.0
    dt = 0.05
    max_torque = 2.0
    max_speed = 8.0

    def _reset_state(self) -> None:
        self.theta = float(self.rng.uniform(-math.pi, math.pi))
        self.theta_dot = float(self.rng.uniform(-1.0, 1.0))

    def set_state(self, theta: float, theta_dot: float) -> None:
        self.theta, self.theta_dot = float(theta), float(theta_dot)
        self.terminated = False

    def _advance(self, a: np.ndarray) -> tuple[float, bool]:
        u = float(np.clip(self.max_torque * a[0], -self.max_torque, self.max_torque))
        th, thd = self.theta, self.theta_dot
        cost = wrap_angle(th) ** 2 + 0.1 * thd**2 + 0.001 * u**2
        acc = 3.0 * self.g / (2.0 * self.length) * math.sin(th) + 3.0 / (self.m * self.length**2) * u
        self.theta = th + self.dt * thd
        self.theta_dot = min(max(thd + self.dt * acc, -self.max_speed), self.max_speed)
        return -cost, False

    def observation(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta), self.theta_dot])


class PointMass(Env):
    """2-D double integrator in the box [-1, 1]^2 driven toward a fixed goal."""

    name = "pointmass"
    observation_dim = 4
    action_dim = 2

    dt = 0.05
    accel = 2.0
    arena = 1.0
    goal_radius = 0.05
    goal = np.array([0.5, 0.5])

    def _reset_state(self) -> None:
        self.pos = self.rng.uniform(-self.arena, self.arena, size=2)
        self.vel = np.zeros(2)

    def set_state(self, pos, vel) -> None:
        self.pos = np.array(pos, dtype=np.float64)
        self.vel = np.array(vel, dtype=np.float64)
        self.terminated = False

    def _advance(self, a: np.ndarray) -> tuple[float, bool]:
        pos = self.pos + self.dt * self.vel
        vel = self.vel + self.dt * self.accel * a
        hit = np.abs(pos) > self.arena
        pos = np.clip(pos, -self.arena, self.arena)
        vel[hit] = 0.0
        self.pos, self.vel = pos, vel
        dist = float(np.linalg.norm(pos - self.goal))
        reward = -dist - 0.01 * float(a @ a)
        return reward, dist < self.goal_radius

    def observation(self) -> np.ndarray:
        return np.concatenate([self.pos, self.vel])


ENVIRONMENTS: dict[str, type[Env]] = {"pendulum": Pendulum, "pointmass": PointMass}


def make_env(name: str, seed: int | None = None) -> Env:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return cls(seed)
