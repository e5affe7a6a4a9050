"""Finite-MDP checks for similarity-weighted Q-learning.

Two claims are exercised numerically: tabular Q-learning in which a share of
the updates is scaled by a weight in [0, 1] still converges to Q*, and the
weighted one-step expectation operator contracts around Q^pi with coefficient
gamma * (1 - E[weight]) per state-action pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass
class FiniteMDP:
    transitions: np.ndarray  # p(s' | s, a), shape (S, A, S)
    rewards: np.ndarray  # r(s, a), shape (S, A)
    gamma: float

    def __post_init__(self):
        p = np.asarray(self.transitions, dtype=np.float64)
        r = np.asarray(self.rewards, dtype=np.float64)
        if p.ndim != 3 or p.shape[0] != p.shape[2] or r.shape != p.shape[:2]:
            raise ValueError("transitions must be (S, A, S) and rewards (S, A)")
        if (p < 0).any() or not np.allclose(p.sum(axis=2), 1.0, atol=1e-12, rtol=0):
            raise ValueError("every p(. | s, a) must be a probability vector")
        if not np.isfinite(r).all():
            raise ValueError("rewards must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        self.transitions, self.rewards = p, r

    @property
    def n_states(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_actions(self) -> int:
        return self.rewards.shape[1]


def random_mdp(n_states: int, n_actions: int, gamma: float, rng: np.random.Generator) -> FiniteMDP:
    p = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    p /= p.sum(axis=2, keepdims=True)
    r = rng.uniform(0.0, 1.0, size=(n_states, n_actions))
    return FiniteMDP(p, r, gamma)


def random_policy(n_states: int, n_actions: int, rng: np.random.Generator) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)


def bellman_optimality(mdp: FiniteMDP, q: np.ndarray) -> np.ndarray:
    return mdp.rewards + mdp.gamma * mdp.transitions @ q.max(axis=1)


def value_iteration(mdp: FiniteMDP, tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = np.zeros_like(mdp.rewards)
    for _ in range(max_iter):
        q_new = bellman_optimality(mdp, q)
        delta = np.max(np.abs(q_new - q))
        q = q_new
        if delta < tol:
            break
    return q


def lr_schedule(tau0: float = 1_000.0, c: float = 1.0) -> Callable[[int], float]:
    """eta_t = c / (1 + t / tau0); the sum diverges while the sum of squares converges."""
    return lambda t: c / (1.0 + t / tau0)


def weighted_q_learning(
    mdp: FiniteMDP,
    schedule: Callable[[int], float],
    weight_fn: Callable[[int], float],
    steps: int,
    rng: np.random.Generator,
    external_fraction: float = 0.5,
    per_pair_clock: bool = False,
) -> np.ndarray:
    """Q-learning along one trajectory of a uniformly random behaviour policy.

    Each update is flagged external with probability ``external_fraction``;
    external TD errors are scaled by ``weight_fn(t)``. With ``per_pair_clock``
    the schedule is indexed by the visit count of the updated (s, a) pair,
    otherwise by the global step.
    """
    S, A = mdp.n_states, mdp.n_actions
    q = np.zeros((S, A))
    visits = np.zeros((S, A), dtype=np.int64)
    cum = np.cumsum(mdp.transitions, axis=2)
    actions = rng.integers(0, A, size=steps)
    u_next = rng.random(steps)
    external = rng.random(steps) < external_fraction
    gamma, rewards = mdp.gamma, mdp.rewards
    s = int(rng.integers(0, S))
    for t in range(steps):
        a = int(actions[t])
        s2 = min(int(np.searchsorted(cum[s, a], u_next[t], side="right")), S - 1)
        w = 1.0
        if external[t]:
            w = weight_fn(t)
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"weight must lie in [0, 1], got {w}")
        eta = schedule(int(visits[s, a]) if per_pair_clock else t)
        visits[s, a] += 1
        td = rewards[s, a] + gamma * q[s2].max() - q[s, a]
        q[s, a] += eta * w * td
        s = s2
    return q


def contraction_coefficient(lambda_mean: float, gamma: float) -> float:
    if not 0.0 <= lambda_mean <= 1.0:
        raise ValueError("lambda_mean must lie in [0, 1]")
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    return gamma * (1.0 - lambda_mean)


def policy_q(mdp: FiniteMDP, policy: np.ndarray) -> np.ndarray:
    """Q^pi from the linear system (I - gamma P Pi) q = r."""
    S, A = mdp.n_states, mdp.n_actions
    p_pi = (mdp.transitions[:, :, :, None] * policy[None, None, :, :]).reshape(S * A, S * A)
    q = np.linalg.solve(np.eye(S * A) - mdp.gamma * p_pi, mdp.rewards.reshape(-1))
    return q.reshape(S, A)


@dataclass
class WeightedOperator:
    """Affine map H Q = M Q + c on flattened Q-tables with H Q^pi = Q^pi.

    M[(s, a), (s', b)] = gamma p(s' | s, a) (pi(b | s') - mu(b | s') lam(s', b)),
    where mu is the behaviour policy and lam the per-pair weight.
    """

    linear: np.ndarray
    offset: np.ndarray
    q_pi: np.ndarray
    xi: np.ndarray  # per-pair coefficient gamma * E_{s'}[1 - sum_b mu lam]

    def __call__(self, q: np.ndarray) -> np.ndarray:
        return (self.linear @ q.reshape(-1) + self.offset).reshape(q.shape)


def weighted_operator(
    mdp: FiniteMDP, policy: np.ndarray, lam: float | np.ndarray, behavior: np.ndarray | None = None
) -> WeightedOperator:
    S, A = mdp.n_states, mdp.n_actions
    mu = policy if behavior is None else behavior
    lam_arr = np.broadcast_to(np.asarray(lam, dtype=np.float64), (S, A))
    if (lam_arr < 0).any() or (lam_arr > 1).any():
        raise ValueError("weights must lie in [0, 1]")
    coeff = policy - mu * lam_arr  # (S', B)
    linear = (mdp.gamma * mdp.transitions[:, :, :, None] * coeff[None, None, :, :]).reshape(S * A, S * A)
    q_pi = policy_q(mdp, policy)
    offset = q_pi.reshape(-1) - linear @ q_pi.reshape(-1)
    kept = 1.0 - (mu * lam_arr).sum(axis=1)  # per next state
    xi = mdp.gamma * mdp.transitions @ kept
    return WeightedOperator(linear, offset, q_pi, xi)


def operator_contraction_check(
    mdp: FiniteMDP,
    policy: np.ndarray,
    lam: float | np.ndarray,
    trials: int,
    rng: np.random.Generator | None = None,
    behavior: np.ndarray | None = None,
    extremal: bool = True,
) -> float:
    """Largest ||HQ - Q^pi||_inf / ||Q - Q^pi||_inf over ``trials`` random Q-tables.

    With ``extremal`` the worst-case deviations for the linear part are tried as well,
    so the returned ratio equals the operator's sup-norm Lipschitz constant.

    The bound gamma * (1 - lam) presumes mu(b|s) lam(s, b) <= pi(b|s) for every pair.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    op = weighted_operator(mdp, policy, lam, behavior)
    worst = 0.0
    scale = 1.0 + np.max(np.abs(op.q_pi))
    deviations = [rng.normal(0.0, scale, size=op.q_pi.shape) for _ in range(trials)]
    if extremal:
        # sign patterns of each row of M attain the induced sup-norm of the linear part
        deviations += [np.sign(row).reshape(op.q_pi.shape) for row in op.linear]
    for dev in deviations:
        q = op.q_pi + dev
        num = np.max(np.abs(op(q) - op.q_pi))
        den = np.max(np.abs(q - op.q_pi))
        if den > 0:
            worst = max(worst, num / den)
    return float(worst)


def pairwise_contraction_ok(
    op: WeightedOperator, q: np.ndarray, slack: float = 1e-9
) -> bool:
    """|HQ(s,a) - Q^pi(s,a)| <= xi(s,a) ||Q - Q^pi|| for every pair."""
    lhs = np.abs(op(q) - op.q_pi)
    rhs = op.xi * np.max(np.abs(q - op.q_pi))
    return bool(np.all(lhs <= rhs + slack * (1.0 + rhs)))


def dps_weight_fn(
    rng: np.random.Generator,
    n_dims: int = 2,
    batch: int = 32,
    sigma: float = 0.1,
    max_offset: float = 0.3,
) -> Callable[[int], float]:
    """Per-step weights from the similarity measure on synthetic action-difference batches.

    Each call draws a batch N(c, sigma^2 I) with c ~ U(0, max_offset) per coordinate,
    i.e. an external policy that lags the current one by a random amount.
    """
    from .dps import DpsConfig, dissimilarity
    from .gaussian import similarity_weight

    cfg = DpsConfig(sigma=sigma)

    def weight(_t: int) -> float:
        c = rng.uniform(0.0, max_offset, size=n_dims)
        diffs = c + sigma * rng.standard_normal((batch, n_dims))
        return similarity_weight(dissimilarity(diffs, cfg))

    return weight
