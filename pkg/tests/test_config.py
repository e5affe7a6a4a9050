from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dase.config import (
    ALGORITHMS,
    CORRECTIONS,
    FIXED_SETTINGS,
    ConfigError,
    DaseConfig,
    config_from_mapping,
    emit_config,
    parse_config,
    parse_lines,
)

GOLDEN = Path(__file__).parent / "golden"


def test_td3_defaults():
    cfg = parse_config({})
    assert cfg.algo == "td3"
    assert (cfg.actor_lr, cfg.critic_lr) == (3e-4, 3e-4)
    assert cfg.tau == 5e-3
    assert cfg.batch_size == 256
    assert cfg.gamma == 0.99
    assert cfg.exploration_noise == 0.1
    assert cfg.start_steps == 25_000
    assert (cfg.hidden1, cfg.hidden2) == (256, 256)
    assert cfg.critic_l2 == 0.0 and not cfg.normalize_observations
    assert (cfg.eval_interval, cfg.eval_episodes) == (1000, 10)


def test_ddpg_defaults():
    cfg = parse_config({"algo": "ddpg"})
    assert (cfg.actor_lr, cfg.critic_lr) == (1e-4, 1e-3)
    assert cfg.tau == 1e-3
    assert (cfg.hidden1, cfg.hidden2) == (400, 300)
    assert cfg.critic_l2 == 1e-2
    assert cfg.normalize_observations
    assert cfg.batch_size == 256


def test_fixed_settings():
    assert FIXED_SETTINGS == {
        "optimizer": "adam",
        "nonlinearity": "relu",
        "hidden_layers": 2,
        "actor_regularization": "none",
        "gradient_clipping": False,
    }


def test_buffer_flag():
    assert parse_config({}, {"buffer_size": "100000"}).buffer_size == 100_000


def test_explicit_values_beat_algorithm_defaults():
    cfg = parse_config({"algo": "ddpg", "tau": "0.01", "hidden1": "64"})
    assert cfg.tau == 0.01 and cfg.hidden1 == 64 and cfg.hidden2 == 300


@pytest.mark.parametrize("algo", ALGORITHMS)
def test_defaults_match_golden_bytes(algo):
    golden = (GOLDEN / f"defaults_{algo}.txt").read_bytes()
    assert emit_config(parse_config({"algo": algo})).encode("utf-8") == golden


@pytest.mark.parametrize(
    "values,key",
    [
        ({"bogus": 1}, "bogus"),
        ({"agents": "0"}, "agents"),
        ({"gamma": "1.0"}, "gamma"),
        ({"tau": "0"}, "tau"),
        ({"batch_size": "512", "buffer_size": "256"}, "batch_size"),
        ({"correction": "importance"}, "correction"),
        ({"algo": "sac"}, "algo"),
        ({"env": "walker"}, "env"),
        ({"agents": "two"}, "agents"),
        ({"normalize_observations": "maybe"}, "normalize_observations"),
    ],
)
def test_rejections_name_the_key(values, key):
    with pytest.raises(ConfigError, match=key):
        parse_config(values)


def test_file_parsing(tmp_path):
    p = tmp_path / "run.txt"
    p.write_text("# comment\nenv = pointmass\nagents=3  # trailing\n\nalgo=ddpg\n", encoding="utf-8")
    cfg = parse_config(p, {"seed": "4"})
    assert (cfg.env, cfg.agents, cfg.algo, cfg.seed) == ("pointmass", 3, "ddpg", 4)
    with pytest.raises(ConfigError, match="line 1"):
        parse_lines(["no equals here"])


configs = st.builds(
    DaseConfig,
    env=st.sampled_from(["pendulum", "pointmass"]),
    algo=st.sampled_from(ALGORITHMS),
    agents=st.integers(1, 10),
    total_steps=st.integers(0, 10**7),
    batch_size=st.integers(1, 256),
    buffer_size=st.integers(256, 10**7),
    correction=st.sampled_from(CORRECTIONS),
    seed=st.integers(0, 2**31),
    gamma=st.floats(0.0, 0.999),
    exploration_noise=st.floats(1e-3, 1.0),
    tau=st.one_of(st.none(), st.floats(1e-4, 1.0)),
    actor_lr=st.one_of(st.none(), st.floats(1e-6, 1e-1)),
    hidden1=st.one_of(st.none(), st.integers(1, 512)),
    normalize_observations=st.one_of(st.none(), st.booleans()),
    adversary_offset=st.floats(-5, 5),
)


@settings(max_examples=200, deadline=None)
@given(configs)
def test_emit_parse_round_trip(cfg):
    text = emit_config(cfg)
    back = config_from_mapping(parse_lines(text.splitlines()))
    assert back == cfg
    assert emit_config(back) == text
    assert parse_config(parse_lines(text.splitlines())) == cfg.resolved()
