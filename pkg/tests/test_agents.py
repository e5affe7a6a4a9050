import numpy as np
import pytest

from dase.agents import (
    Learner,
    RunningNorm,
    actor_update,
    critic_update,
    load_checkpoint,
    save_checkpoint,
    train_mixed,
)
from dase.config import DaseConfig
from dase.nn import numerical_gradient, relative_error
from dase.replay import Batch, split

OBS, ACT = 3, 2


def make(algo="td3", seed=0, **kw):
    cfg = DaseConfig(algo=algo, hidden1=16, hidden2=16, seed=seed, **kw)
    return Learner(0, cfg, OBS, ACT)


def batch(n=12, seed=0, agents=None):
    rng = np.random.default_rng(seed)
    ids = np.array(agents if agents is not None else rng.integers(0, 2, size=n), dtype=np.int64)
    n = len(ids)
    return Batch(
        rng.normal(size=(n, OBS)),
        rng.uniform(-1, 1, size=(n, ACT)),
        rng.normal(size=n),
        rng.normal(size=(n, OBS)),
        rng.random(n) < 0.2,
        ids,
        np.arange(n),
    )


def params_of(learner):
    return [p.copy() for net in learner.networks().values() for p in net.params]


def same(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


def test_targets_start_as_exact_copies():
    ln = make()
    for name, net in ln.networks().items():
        if name.endswith("target"):
            src = ln.networks()[name[: -len("_target")]]
            assert same(net.params, src.params)


def test_select_action_greedy_and_noisy():
    ln = make()
    s = np.array([0.1, -0.2, 0.3])
    assert np.array_equal(ln.select_action(s, explore=False), ln.policy(s))
    a1 = make().select_action(s, explore=True)
    a2 = make().select_action(s, explore=True)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, ln.policy(s))


def test_select_action_clipped_at_bound():
    ln = make()
    last = ln.actor.layers[-1]
    last.weight[:] = 0.0
    last.bias[:] = 50.0  # tanh saturates at exactly 1.0
    a = ln.select_action(np.zeros(OBS), explore=True)
    assert np.all(a <= 1.0) and np.all(ln.policy(np.zeros(OBS)) == 1.0)
    assert np.any(a == 1.0)


def test_lambda_one_internal_equals_external():
    b = batch(agents=[0] * 12)
    own, other = make(), make()
    mixed_own = split(b, 0)
    mixed_ext = split(b, 1)
    assert mixed_own.n_external == 0 and mixed_ext.n_internal == 0
    for _ in range(4):
        train_mixed(own, mixed_own, 1.0)
        train_mixed(other, mixed_ext, 1.0)
    assert same(params_of(own), params_of(other))


def test_lambda_one_equals_unweighted_training():
    b = batch()
    a, c = make(), make()
    for _ in range(4):
        train_mixed(a, split(b, 0), 1.0)
        c.train_step(b, None)
    assert same(params_of(a), params_of(c))


def test_lambda_zero_ignores_external_content():
    b = batch(seed=3)
    mixed = split(b, 0)
    altered = batch(seed=3)
    ext = altered.agent_ids != 0
    altered.rewards[ext] = 0.0
    altered.actions[ext] = 0.5
    a, c = make(), make()
    critic_update(a, mixed, 0.0)
    critic_update(c, split(altered, 0), 0.0)
    actor_update(a, mixed, 0.0)
    actor_update(c, split(altered, 0), 0.0)
    assert same(params_of(a), params_of(c))


def test_single_transition_loss_is_reward_squared():
    ln = make("ddpg", gamma=0.0, critic_l2=0.0, normalize_observations=False)
    last = ln.critics[0].layers[-1]
    last.weight[:] = 0.0
    last.bias[:] = 0.0
    b = batch(n=1, agents=[0])
    b.rewards[:] = 1.7
    loss = critic_update(ln, split(b, 0), 0.3)
    assert loss == pytest.approx(1.7**2, rel=1e-14)


def test_lambda_range_checked():
    ln = make()
    with pytest.raises(ValueError):
        critic_update(ln, split(batch(), 0), 1.5)
    with pytest.raises(ValueError):
        critic_update(ln, split(batch(n=0, agents=[]), 0), 0.5)


def test_td3_target_below_each_target_critic():
    ln = make()
    # perturb one target critic so the twins disagree
    ln.critic_targets[1].layers[-1].bias[:] += 0.3
    b = batch(n=32, seed=4)
    b.dones[:] = False
    b.rewards[:] = 0.0
    state = ln.update_rng.bit_generator.state
    y = ln.td_targets(b)
    ln.update_rng.bit_generator.state = state
    noise = np.clip(ln.update_rng.normal(0.0, ln.target_noise, size=(32, ACT)), -ln.noise_clip, ln.noise_clip)
    a2 = np.clip(ln.actor_target(b.next_states) + noise, -1, 1)
    x2 = np.concatenate([b.next_states, a2], axis=1)
    for tgt in ln.critic_targets:
        assert np.all(y <= ln.gamma * tgt(x2)[:, 0] + 1e-12)


def test_soft_update_reduces_drift():
    ln = make()
    train_mixed(ln, split(batch(), 0), 0.5)
    train_mixed(ln, split(batch(), 0), 0.5)

    def gap():
        return max(np.max(np.abs(t - s)) for t, s in zip(ln.actor_target.params, ln.actor.params))

    before = gap()
    ln.update_targets()
    assert gap() < before


def test_policy_delay_respected():
    ln = make()
    b = split(batch(), 0)
    actor_before = [p.copy() for p in ln.actor.params]
    _, aobj = train_mixed(ln, b, 0.5)
    assert aobj is None and same(actor_before, ln.actor.params)
    _, aobj = train_mixed(ln, b, 0.5)
    assert aobj is not None and not same(actor_before, ln.actor.params)


def test_actor_gradient_finite_differences():
    ln = make(seed=2)
    b = batch(seed=5)
    w = split(b, 0).sample_weights(0.4)
    _, grads = ln.actor_gradient(b, w)
    f = lambda: -ln.actor_gradient(b, w)[0]
    worst = max(
        relative_error(g, numerical_gradient(f, p, 1e-6), floor=1e-6) for p, g in zip(ln.actor.params, grads)
    )
    assert worst < 1e-4


@pytest.mark.parametrize("algo", ["td3", "ddpg"])
def test_critic_gradient_finite_differences(algo):
    ln = make(algo, seed=3, normalize_observations=False)
    b = batch(seed=6)
    w = split(b, 1).sample_weights(0.7)
    y = ln.td_targets(b)
    out = ln.critic_gradients(b, w, targets=y)
    for i, (critic, (_, grads)) in enumerate(zip(ln.critics, out)):
        f = lambda: ln.critic_gradients(b, w, targets=y)[i][0]
        worst = max(
            relative_error(g, numerical_gradient(f, p, 1e-6), floor=1e-6) for p, g in zip(critic.params, grads)
        )
        assert worst < 1e-4


def test_gradients_linear_in_lambda():
    ln = make(seed=4)
    b = batch(seed=7)
    mixed = split(b, 0)
    y = ln.td_targets(b)

    def grads(lam):
        w = mixed.sample_weights(lam)
        c = ln.critic_gradients(b, w, targets=y)[0][1]
        a = ln.actor_gradient(b, w)[1]
        return c + a

    g0, g5, g1 = grads(0.0), grads(0.5), grads(1.0)
    for a, m, c in zip(g0, g5, g1):
        np.testing.assert_allclose(m, 0.5 * (a + c), rtol=0, atol=1e-9)


def test_running_norm_matches_numpy():
    rng = np.random.default_rng(0)
    x = rng.normal(3.0, 2.0, size=(500, 4))
    norm = RunningNorm(4)
    for row in x:
        norm.update(row)
    np.testing.assert_allclose(norm.mean, x.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(norm.std, np.sqrt(x.var(axis=0) + 1e-8), rtol=1e-10)


@pytest.mark.parametrize("algo", ["td3", "ddpg"])
def test_checkpoint_round_trip(tmp_path, algo):
    ln = make(algo, seed=5)
    for row in batch(n=20).states:
        ln.observe(row)
    for _ in range(3):
        train_mixed(ln, split(batch(), 0), 0.6)
    save_checkpoint(ln, tmp_path / "ckpt")
    back = load_checkpoint(tmp_path / "ckpt")
    assert back.total_it == ln.total_it and back.agent_id == ln.agent_id
    assert same(params_of(back), params_of(ln))
    s = np.array([0.4, -0.1, 0.2])
    assert np.array_equal(back.select_action(s, explore=False), ln.select_action(s, explore=False))
    assert back.actor_opt.step == ln.actor_opt.step
    assert same(back.actor_opt.m, ln.actor_opt.m) and same(back.critic_opts[0].v, ln.critic_opts[0].v)
