"""DDPG and TD3 learners whose losses accept a weight per sampled transition."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .config import DaseConfig
from .nn import AdamState, DenseNet, adam_step, load_arrays, load_net, save_arrays, save_net, soft_update
from .replay import Batch, MixedBatch


class RunningNorm:
    """Welford running mean/variance used for observation normalisation."""

    def __init__(self, dim: int, clip: float = 10.0):
        self.count = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)
        self.clip = clip

    def update(self, x: np.ndarray) -> None:
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + delta * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        var = self.m2 / self.count if self.count > 1 else np.ones_like(self.m2)
        return np.sqrt(var + 1e-8)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return np.clip((x - self.mean) / self.std, -self.clip, self.clip)


class Learner:
    """One agent: actor, one (DDPG) or two (TD3) critics, their targets and optimisers.

    Random streams are spawned from ``seed``: network init, exploration,
    replay sampling, environment resets, target-policy noise and DPS sampling.
    """

    def __init__(
        self,
        agent_id: int,
        cfg: DaseConfig,
        obs_dim: int,
        act_dim: int,
        action_bound: float = 1.0,
        seed: int | None = None,
    ):
        cfg = cfg.resolved()
        self.cfg = cfg
        self.agent_id = agent_id
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.action_bound = action_bound
        self.seed = cfg.seed + agent_id if seed is None else seed
        init, explore, sample, env, update, dps = np.random.SeedSequence(self.seed).spawn(6)
        self.init_rng = np.random.default_rng(init)
        self.explore_rng = np.random.default_rng(explore)
        self.sample_rng = np.random.default_rng(sample)
        self.env_rng = np.random.default_rng(env)
        self.update_rng = np.random.default_rng(update)
        self.dps_rng = np.random.default_rng(dps)

        self.gamma = cfg.gamma
        self.tau = cfg.tau
        self.policy_delay = cfg.policy_delay
        self.twin = cfg.algo == "td3"
        self.target_noise = cfg.target_noise if self.twin else 0.0
        self.noise_clip = cfg.noise_clip
        self.exploration_noise = cfg.exploration_noise
        self.critic_l2 = cfg.critic_l2
        self.reward_scale = cfg.reward_scale

        h = [cfg.hidden1, cfg.hidden2]
        self.actor = DenseNet.mlp(
            [obs_dim, *h, act_dim], self.init_rng, output_activation="tanh", output_scale=action_bound
        )
        n_critics = 2 if self.twin else 1
        self.critics = [DenseNet.mlp([obs_dim + act_dim, *h, 1], self.init_rng) for _ in range(n_critics)]
        self.actor_target = self.actor.copy()
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opt = AdamState.for_params(self.actor.params, cfg.actor_lr)
        self.critic_opts = [AdamState.for_params(c.params, cfg.critic_lr) for c in self.critics]
        self.norm = RunningNorm(obs_dim) if cfg.normalize_observations else None
        self.total_it = 0

    # -- acting ---------------------------------------------------------------

    def _in(self, states: np.ndarray) -> np.ndarray:
        return self.norm(states) if self.norm is not None else states

    def observe(self, state: np.ndarray) -> None:
        if self.norm is not None:
            self.norm.update(np.asarray(state, dtype=np.float64))

    def policy(self, states: np.ndarray) -> np.ndarray:
        return self.actor(self._in(np.asarray(states, dtype=np.float64)))

    def select_action(self, state: np.ndarray, explore: bool = True) -> np.ndarray:
        a = self.policy(state)
        if explore:
            a = a + self.explore_rng.normal(0.0, self.exploration_noise * self.action_bound, size=self.act_dim)
        return np.clip(a, -self.action_bound, self.action_bound)

    def random_action(self) -> np.ndarray:
        return self.explore_rng.uniform(-self.action_bound, self.action_bound, size=self.act_dim)

    # -- learning -------------------------------------------------------------

    def td_targets(self, batch: Batch) -> np.ndarray:
        s2 = self._in(batch.next_states)
        a2 = self.actor_target(s2)
        if self.target_noise > 0:
            noise = self.update_rng.normal(0.0, self.target_noise, size=a2.shape)
            noise = np.clip(noise, -self.noise_clip, self.noise_clip)
            a2 = np.clip(a2 + noise, -self.action_bound, self.action_bound)
        x2 = np.concatenate([s2, a2], axis=1)
        q_next = self.critic_targets[0](x2)[:, 0]
        if self.twin:
            q_next = np.minimum(q_next, self.critic_targets[1](x2)[:, 0])
        rewards = batch.rewards * self.reward_scale if self.reward_scale != 1.0 else batch.rewards
        y = rewards + self.gamma * (1.0 - batch.dones) * q_next
        if not np.isfinite(y).all():
            raise FloatingPointError("non-finite TD target")
        return y

    def critic_gradients(
        self, batch: Batch, weights: np.ndarray | None = None, targets: np.ndarray | None = None
    ) -> list[tuple[float, list[np.ndarray]]]:
        """Loss sum_i w_i (Q(s_i, a_i) - y_i)^2 / |B| and its gradient, per critic.

        ``weights=None`` is the plain unweighted mean-squared TD error.
        """
        n = len(batch)
        if n == 0:
            raise ValueError("empty batch")
        y = self.td_targets(batch) if targets is None else targets
        x = np.concatenate([self._in(batch.states), batch.actions], axis=1)
        out = []
        for critic in self.critics:
            q, cache = critic.forward_cached(x)
            err = q[:, 0] - y
            if weights is None:
                loss = float(np.sum(err * err)) / n
                g = 2.0 * err / n
            else:
                loss = float(np.sum(weights * (err * err))) / n
                g = 2.0 * (weights * err) / n
            grads = critic.backward_cached(cache, g[:, None], input_grad=False).grads
            if self.critic_l2 > 0:
                params = critic.params
                loss += self.critic_l2 * sum(float(np.sum(p * p)) for p in params)
                grads = [gr + 2.0 * self.critic_l2 * p for gr, p in zip(grads, params)]
            out.append((loss, grads))
        return out

    def critic_step(self, batch: Batch, weights: np.ndarray | None = None) -> float:
        """One Adam step per critic; returns the summed critic loss."""
        total = 0.0
        for (loss, grads), critic, opt in zip(self.critic_gradients(batch, weights), self.critics, self.critic_opts):
            if not np.isfinite(loss):
                raise FloatingPointError("non-finite critic loss")
            adam_step(critic.params, grads, opt)
            total += loss
        self.total_it += 1
        return total

    def actor_gradient(self, batch: Batch, weights: np.ndarray | None = None) -> tuple[float, list[np.ndarray]]:
        """Objective J = sum_i w_i Q1(s_i, pi(s_i)) / |B| and the gradient of -J."""
        n = len(batch)
        if n == 0:
            raise ValueError("empty batch")
        s = self._in(batch.states)
        a, actor_cache = self.actor.forward_cached(s)
        q, critic_cache = self.critics[0].forward_cached(np.concatenate([s, a], axis=1))
        w = np.ones(n) if weights is None else weights
        objective = float(np.sum(w * q[:, 0])) / n
        upstream = (-w / n)[:, None]
        dq = self.critics[0].backward_cached(critic_cache, upstream, param_grads=False).input_grad
        bundle = self.actor.backward_cached(actor_cache, dq[:, self.obs_dim :], input_grad=False)
        return objective, bundle.grads

    def actor_step(self, batch: Batch, weights: np.ndarray | None = None) -> float:
        objective, grads = self.actor_gradient(batch, weights)
        if not np.isfinite(objective):
            raise FloatingPointError("non-finite actor objective")
        adam_step(self.actor.params, grads, self.actor_opt)
        return objective

    def update_targets(self) -> None:
        soft_update(self.actor_target, self.actor, self.tau)
        for tgt, src in zip(self.critic_targets, self.critics):
            soft_update(tgt, src, self.tau)

    def train_step(self, batch: Batch, weights: np.ndarray | None = None) -> tuple[float, float | None]:
        """Critic step, then (every ``policy_delay`` critic steps) actor step and target update."""
        closs = self.critic_step(batch, weights)
        aobj = None
        if self.total_it % self.policy_delay == 0:
            aobj = self.actor_step(batch, weights)
            self.update_targets()
        return closs, aobj

    def networks(self) -> dict[str, DenseNet]:
        nets = {"actor": self.actor, "actor_target": self.actor_target}
        for i, (c, t) in enumerate(zip(self.critics, self.critic_targets)):
            nets[f"critic{i}"] = c
            nets[f"critic{i}_target"] = t
        return nets

    def all_finite(self) -> bool:
        return all(net.all_finite() for net in self.networks().values())


def _check_lambda(batch: MixedBatch, lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if len(batch.batch) == 0:
        raise ValueError("both internal and external parts are empty")


def critic_update(learner: Learner, batch: MixedBatch, lam: float) -> float:
    """Critic step with own rows at weight 1 and external rows at ``lam``."""
    _check_lambda(batch, lam)
    return learner.critic_step(batch.batch, batch.sample_weights(lam))


def actor_update(learner: Learner, batch: MixedBatch, lam: float) -> float:
    """Deterministic policy gradient step on the weighted objective, then soft target updates."""
    _check_lambda(batch, lam)
    obj = learner.actor_step(batch.batch, batch.sample_weights(lam))
    learner.update_targets()
    return obj


def train_mixed(learner: Learner, batch: MixedBatch, lam: float) -> tuple[float, float | None]:
    _check_lambda(batch, lam)
    return learner.train_step(batch.batch, batch.sample_weights(lam))


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(learner: Learner, path: str | Path) -> None:
    from .config import emit_config

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for name, net in learner.networks().items():
        with open(path / f"{name}.bin", "wb") as fh:
            save_net(net, fh)
    opts = {"actor": learner.actor_opt, **{f"critic{i}": o for i, o in enumerate(learner.critic_opts)}}
    for name, opt in opts.items():
        with open(path / f"{name}_adam.bin", "wb") as fh:
            save_arrays(opt.m + opt.v, fh)
    header = (
        f"agent_id={learner.agent_id}\n"
        f"seed={learner.seed}\n"
        f"total_it={learner.total_it}\n"
        f"obs_dim={learner.obs_dim}\n"
        f"act_dim={learner.act_dim}\n"
        f"action_bound={learner.action_bound!r}\n"
        + "".join(f"adam_step.{name}={opt.step}\n" for name, opt in opts.items())
    )
    if learner.norm is not None:
        header += f"norm_count={learner.norm.count}\n"
        with open(path / "norm.bin", "wb") as fh:
            save_arrays([learner.norm.mean, learner.norm.m2], fh)
    (path / "header.txt").write_text(header, encoding="utf-8")
    (path / "config.txt").write_text(emit_config(learner.cfg), encoding="utf-8")


def load_checkpoint(path: str | Path) -> Learner:
    from .config import parse_config, parse_lines

    path = Path(path)
    head = parse_lines((path / "header.txt").read_text(encoding="utf-8").splitlines())
    cfg = parse_config(path / "config.txt")
    learner = Learner(
        int(head["agent_id"]),
        cfg,
        int(head["obs_dim"]),
        int(head["act_dim"]),
        float(head["action_bound"]),
        seed=int(head["seed"]),
    )
    learner.total_it = int(head["total_it"])
    for name in learner.networks():
        with open(path / f"{name}.bin", "rb") as fh:
            loaded = load_net(fh)
        for dst, src in zip(learner.networks()[name].params, loaded.params):
            dst[...] = src
    opts = {"actor": learner.actor_opt, **{f"critic{i}": o for i, o in enumerate(learner.critic_opts)}}
    for name, opt in opts.items():
        with open(path / f"{name}_adam.bin", "rb") as fh:
            arrays = load_arrays(fh)
        k = len(opt.m)
        opt.m = arrays[:k]
        opt.v = arrays[k:]
        opt.step = int(head[f"adam_step.{name}"])
    if learner.norm is not None:
        with open(path / "norm.bin", "rb") as fh:
            learner.norm.mean, learner.norm.m2 = load_arrays(fh)
        learner.norm.count = int(head["norm_count"])
    return learner
