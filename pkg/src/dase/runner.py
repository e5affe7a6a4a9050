"""K learners, independent environment copies, one shared replay buffer.

Each learner repeatedly takes one environment step, stores the transition in
the shared buffer and runs one training iteration on a uniformly sampled
batch: own rows at weight 1, other agents' rows at the similarity weight of
its current policy. Two schedulers are provided. ``round_robin`` interleaves
the learners in a single thread and is fully deterministic given the seed;
``parallel`` gives every learner its own thread and only guarantees buffer
consistency.
"""

from __future__ import annotations

import logging
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .agents import Learner, train_mixed
from .config import DaseConfig
from .dps import DpsConfig, dps_weight
from .envs import Env, make_env
from .replay import SharedReplayBuffer, Transition, split

log = logging.getLogger(__name__)


@dataclass
class RunRecord:
    config: DaseConfig
    evals: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    # (step, agent, lambda, critic_loss, actor_objective or None)
    diagnostics: list[tuple[int, int, float, float, float | None]] = field(default_factory=list)
    wall_clock: float = 0.0

    def eval_returns(self, agent: int) -> np.ndarray:
        return np.array([r for _, r in self.evals[agent]])

    def final_return(self, agent: int, last: int = 10) -> float:
        return float(np.mean(self.eval_returns(agent)[-last:]))

    def lambdas(self, agent: int | None = None) -> np.ndarray:
        return np.array([d[2] for d in self.diagnostics if agent is None or d[1] == agent])


def evaluate(learner: Learner, env: Env, episodes: int, eval_seed: int, max_steps: int = 1000) -> float:
    """Mean undiscounted return of the noise-free policy; touches no learner state."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    total = 0.0
    for ep in range(episodes):
        obs = env.reset(seed=eval_seed if ep == 0 else None)
        for _ in range(max_steps):
            obs, r, done = env.step(learner.select_action(obs, explore=False))
            total += r
            if done:
                break
    return total / episodes


def dps_config(cfg: DaseConfig) -> DpsConfig:
    return DpsConfig(
        divergence="kl" if cfg.correction == "dps_kl" else "jsd",
        sigma=cfg.exploration_noise,
        mc_samples=cfg.dps_mc_samples,
        ridge=cfg.dps_ridge,
        cov_mode=cfg.dps_cov_mode,
    )


class _Worker:
    """Per-learner loop state: environment, current observation, counters, logs."""

    def __init__(self, learner: Learner, cfg: DaseConfig, adversarial: bool):
        self.learner = learner
        self.cfg = cfg
        self.adversarial = adversarial
        self.env = make_env(cfg.env, seed=int(learner.env_rng.integers(2**31)))
        self.eval_env = make_env(cfg.env)
        self.eval_seed = learner.seed + cfg.eval_seed_offset
        self.obs = self.env.reset()
        learner.observe(self.obs)
        self.episode_t = 0
        self.t = 0
        self.evals: list[tuple[int, float]] = []
        self.diagnostics: list[tuple[int, int, float, float, float | None]] = []
        self.dps_cfg = dps_config(cfg)
        self.n_updates = cfg.updates_per_step * (cfg.lead_agent_updates if learner.agent_id == 0 else 1)

    def explore(self, buffer: SharedReplayBuffer) -> None:
        lr, cfg = self.learner, self.cfg
        if self.t < cfg.start_steps:
            action = lr.random_action()
        else:
            action = lr.select_action(self.obs, explore=True)
        obs2, reward, done = self.env.step(action)
        self.episode_t += 1
        stored = action
        if self.adversarial:
            # the record claims a different action than the one executed; left unclipped so the
            # offset survives instead of collapsing onto the action bound
            stored = action + cfg.adversary_offset
        buffer.append(Transition(self.obs, stored, reward, obs2, done, lr.agent_id, self.t))
        lr.observe(obs2)
        if done or self.episode_t >= cfg.max_episode_steps:
            self.obs = self.env.reset()
            lr.observe(self.obs)
            self.episode_t = 0
        else:
            self.obs = obs2

    def train(self, buffer: SharedReplayBuffer) -> None:
        cfg, lr = self.cfg, self.learner
        if self.t < cfg.start_steps or len(buffer) < cfg.batch_size:
            return
        for _ in range(self.n_updates):
            mixed = split(buffer.sample(cfg.batch_size, lr.sample_rng), lr.agent_id)
            lam = 1.0
            if cfg.correction != "none" and mixed.n_external > 0:
                lam = dps_weight(lr.policy, mixed.external, self.dps_cfg, rng=lr.dps_rng)
            closs, aobj = train_mixed(lr, mixed, lam)
            self.diagnostics.append((self.t, lr.agent_id, lam, closs, aobj))

    def maybe_evaluate(self) -> None:
        if (self.t + 1) % self.cfg.eval_interval:
            return
        lr = self.learner
        if not lr.all_finite():
            raise FloatingPointError(f"agent {lr.agent_id}: non-finite parameters at step {self.t + 1}")
        ret = evaluate(lr, self.eval_env, self.cfg.eval_episodes, self.eval_seed, self.cfg.max_episode_steps)
        self.evals.append((self.t + 1, ret))
        log.info("agent %d step %d eval %.2f", lr.agent_id, self.t + 1, ret)

    def tick(self, buffer: SharedReplayBuffer) -> None:
        self.explore(buffer)
        self.train(buffer)
        self.maybe_evaluate()
        self.t += 1


def build(cfg: DaseConfig) -> tuple[list[_Worker], SharedReplayBuffer]:
    cfg = cfg.resolved()
    probe = make_env(cfg.env)
    buffer = SharedReplayBuffer(cfg.buffer_size, probe.observation_dim, probe.action_dim)
    workers = []
    for i in range(cfg.agents):
        learner = Learner(i, cfg, probe.observation_dim, probe.action_dim, probe.action_bound)
        adversarial = cfg.adversary_offset != 0.0 and cfg.agents > 1 and i == cfg.agents - 1
        workers.append(_Worker(learner, cfg, adversarial))
    return workers, buffer


def _record(cfg: DaseConfig, workers: list[_Worker], started: float) -> RunRecord:
    rec = RunRecord(config=cfg.resolved())
    for w in workers:
        rec.evals[w.learner.agent_id] = w.evals
        rec.diagnostics.extend(w.diagnostics)
    rec.diagnostics.sort(key=lambda d: (d[0], d[1]))
    rec.wall_clock = time.perf_counter() - started
    return rec


def run(cfg: DaseConfig) -> RunRecord:
    cfg = cfg.resolved()
    started = time.perf_counter()
    workers, buffer = build(cfg)
    if cfg.scheduler == "round_robin":
        for _ in range(cfg.total_steps):
            for w in workers:
                w.tick(buffer)
    else:
        errors: list[BaseException] = []

        def loop(w: _Worker):
            try:
                for _ in range(cfg.total_steps):
                    w.tick(buffer)
            except BaseException as exc:  # surfaced after join
                errors.append(exc)

        threads = [threading.Thread(target=loop, args=(w,), name=f"learner-{i}") for i, w in enumerate(workers)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()
        if errors:
            raise errors[0]
    return _record(cfg, workers, started)


def run_baseline(cfg: DaseConfig) -> RunRecord:
    """Single-agent reference loop: private replay, unweighted updates, no similarity weighting."""
    cfg = cfg.resolved()
    started = time.perf_counter()
    env = make_env(cfg.env)
    learner = Learner(0, cfg, env.observation_dim, env.action_dim, env.action_bound)
    env = make_env(cfg.env, seed=int(learner.env_rng.integers(2**31)))
    eval_env = make_env(cfg.env)
    replay = SharedReplayBuffer(cfg.buffer_size, env.observation_dim, env.action_dim)
    rec = RunRecord(config=cfg, evals={0: []})

    obs = env.reset()
    learner.observe(obs)
    episode_t = 0
    for t in range(cfg.total_steps):
        action = learner.random_action() if t < cfg.start_steps else learner.select_action(obs)
        obs2, reward, done = env.step(action)
        episode_t += 1
        replay.append(Transition(obs, action, reward, obs2, done, 0, t))
        learner.observe(obs2)
        if done or episode_t >= cfg.max_episode_steps:
            obs = env.reset()
            learner.observe(obs)
            episode_t = 0
        else:
            obs = obs2
        if t >= cfg.start_steps and len(replay) >= cfg.batch_size:
            for _ in range(cfg.updates_per_step * cfg.lead_agent_updates):
                closs, aobj = learner.train_step(replay.sample(cfg.batch_size, learner.sample_rng))
                rec.diagnostics.append((t, 0, 1.0, closs, aobj))
        if (t + 1) % cfg.eval_interval == 0:
            ret = evaluate(learner, eval_env, cfg.eval_episodes, learner.seed + cfg.eval_seed_offset, cfg.max_episode_steps)
            rec.evals[0].append((t + 1, ret))
    rec.wall_clock = time.perf_counter() - started
    return rec


def run_naive_shared(cfg: DaseConfig) -> RunRecord:
    """K learners on one buffer training on whole batches with no partitioning at all."""
    cfg = cfg.resolved()
    started = time.perf_counter()
    workers, buffer = build(cfg)

    def train_unpartitioned(w: _Worker) -> None:
        lr = w.learner
        if w.t < cfg.start_steps or len(buffer) < cfg.batch_size:
            return
        for _ in range(w.n_updates):
            closs, aobj = lr.train_step(buffer.sample(cfg.batch_size, lr.sample_rng), np.ones(cfg.batch_size))
            w.diagnostics.append((w.t, lr.agent_id, 1.0, closs, aobj))

    for _ in range(cfg.total_steps):
        for w in workers:
            w.explore(buffer)
            train_unpartitioned(w)
            w.maybe_evaluate()
            w.t += 1
    return _record(cfg, workers, started)
