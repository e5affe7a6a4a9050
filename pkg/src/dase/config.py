"""Run configuration: defaults, flat ``key=value`` parsing and emission."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable, Mapping

ALGORITHMS = ("td3", "ddpg")
CORRECTIONS = ("dps_jsd", "dps_kl", "none")
SCHEDULERS = ("round_robin", "parallel")

# Settings shared by every algorithm; not configurable.
FIXED_SETTINGS = {
    "optimizer": "adam",
    "nonlinearity": "relu",
    "hidden_layers": 2,
    "actor_regularization": "none",
    "gradient_clipping": False,
}

ALGO_DEFAULTS: dict[str, dict[str, Any]] = {
    "td3": dict(
        actor_lr=3e-4,
        critic_lr=3e-4,
        tau=5e-3,
        hidden1=256,
        hidden2=256,
        critic_l2=0.0,
        policy_delay=2,
        target_noise=0.2,
        noise_clip=0.5,
        normalize_observations=False,
    ),
    "ddpg": dict(
        actor_lr=1e-4,
        critic_lr=1e-3,
        tau=1e-3,
        hidden1=400,
        hidden2=300,
        critic_l2=1e-2,
        policy_delay=1,
        target_noise=0.0,
        noise_clip=0.0,
        normalize_observations=True,
    ),
}


class ConfigError(ValueError):
    pass


@dataclass
class DaseConfig:
    env: str = "pendulum"
    algo: str = "td3"
    agents: int = 2
    total_steps: int = 1_000_000
    start_steps: int = 25_000
    batch_size: int = 256
    buffer_size: int = 1_000_000
    eval_interval: int = 1000
    eval_episodes: int = 10
    max_episode_steps: int = 1000
    correction: str = "dps_jsd"
    seed: int = 0
    eval_seed_offset: int = 100
    gamma: float = 0.99
    exploration_noise: float = 0.1
    reward_scale: float = 1.0
    updates_per_step: int = 1
    # algorithm dependent; None means "take the algorithm default"
    actor_lr: float | None = None
    critic_lr: float | None = None
    tau: float | None = None
    hidden1: int | None = None
    hidden2: int | None = None
    critic_l2: float | None = None
    policy_delay: int | None = None
    target_noise: float | None = None
    noise_clip: float | None = None
    normalize_observations: bool | None = None
    # similarity weighting
    dps_mc_samples: int = 0
    dps_ridge: float = 1e-6
    dps_cov_mode: str = "sigma_sq"
    # experiment knobs
    scheduler: str = "round_robin"
    adversary_offset: float = 0.0
    lead_agent_updates: int = 1

    def resolved(self) -> "DaseConfig":
        out = dataclasses.replace(self)
        if out.algo not in ALGO_DEFAULTS:
            raise ConfigError(f"algo: must be one of {ALGORITHMS}, got {out.algo!r}")
        for key, val in ALGO_DEFAULTS[out.algo].items():
            if getattr(out, key) is None:
                setattr(out, key, val)
        out.validate()
        return out

    def validate(self) -> None:
        def need(cond: bool, key: str, msg: str):
            if not cond:
                raise ConfigError(f"{key}: {msg} (got {getattr(self, key)!r})")

        from .envs import ENVIRONMENTS

        need(self.env in ENVIRONMENTS, "env", f"must be one of {sorted(ENVIRONMENTS)}")
        need(self.algo in ALGORITHMS, "algo", f"must be one of {ALGORITHMS}")
        need(self.correction in CORRECTIONS, "correction", f"must be one of {CORRECTIONS}")
        need(self.scheduler in SCHEDULERS, "scheduler", f"must be one of {SCHEDULERS}")
        need(self.dps_cov_mode in ("sigma_sq", "sigma"), "dps_cov_mode", "must be sigma_sq or sigma")
        need(self.agents >= 1, "agents", "must be >= 1")
        need(self.total_steps >= 0, "total_steps", "must be >= 0")
        need(self.start_steps >= 0, "start_steps", "must be >= 0")
        need(self.batch_size >= 1, "batch_size", "must be >= 1")
        need(self.buffer_size >= 1, "buffer_size", "must be >= 1")
        need(self.batch_size <= self.buffer_size, "batch_size", "must not exceed buffer_size")
        need(self.eval_interval >= 1, "eval_interval", "must be >= 1")
        need(self.eval_episodes >= 1, "eval_episodes", "must be >= 1")
        need(self.max_episode_steps >= 1, "max_episode_steps", "must be >= 1")
        need(0.0 <= self.gamma < 1.0, "gamma", "must lie in [0, 1)")
        need(self.exploration_noise > 0, "exploration_noise", "must be > 0")
        need(self.updates_per_step >= 1, "updates_per_step", "must be >= 1")
        need(self.lead_agent_updates >= 1, "lead_agent_updates", "must be >= 1")
        need(self.dps_mc_samples >= 0, "dps_mc_samples", "must be >= 0")
        need(self.dps_ridge >= 0, "dps_ridge", "must be >= 0")
        if self.tau is not None:
            need(0.0 < self.tau <= 1.0, "tau", "must lie in (0, 1]")
        for key in ("actor_lr", "critic_lr"):
            val = getattr(self, key)
            if val is not None:
                need(val > 0, key, "must be > 0")
        for key in ("hidden1", "hidden2", "policy_delay"):
            val = getattr(self, key)
            if val is not None:
                need(val >= 1, key, "must be >= 1")
        for key in ("critic_l2", "target_noise", "noise_clip"):
            val = getattr(self, key)
            if val is not None:
                need(val >= 0, key, "must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(DaseConfig)}


def _coerce(key: str, raw: Any) -> Any:
    ftype = str(_FIELD_TYPES[key])
    if raw is None:
        return None
    if isinstance(raw, str):
        text = raw.strip()
        if text.lower() in ("none", "") and "None" in ftype:
            return None
    else:
        text = raw
    try:
        if ftype.startswith("bool"):
            if isinstance(text, bool):
                return text
            low = str(text).lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(text)
        if ftype.startswith("int"):
            as_float = float(text)
            if as_float != int(as_float):
                raise ValueError(text)
            return int(as_float)
        if ftype.startswith("float"):
            return float(text)
        return str(text)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {raw!r} as {ftype}") from None


def config_from_mapping(values: Mapping[str, Any], base: DaseConfig | None = None) -> DaseConfig:
    cfg = dataclasses.replace(base) if base is not None else DaseConfig()
    for key, raw in values.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{key}: unknown configuration key")
        setattr(cfg, key, _coerce(key, raw))
    return cfg


def parse_lines(lines: Iterable[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def parse_config(
    source: str | Path | Mapping[str, Any] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> DaseConfig:
    """Resolve a config from a key=value file and/or a mapping of flag values.

    Unspecified algorithm-dependent fields take the defaults for ``algo``.
    """
    values: dict[str, Any] = {}
    if isinstance(source, (str, Path)):
        values.update(parse_lines(Path(source).read_text(encoding="utf-8").splitlines()))
    elif source is not None:
        values.update(source)
    if overrides:
        values.update(overrides)
    return config_from_mapping(values).resolved()


def _fmt(val: Any) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if val is None:
        return "none"
    return str(val)


def emit_config(cfg: DaseConfig) -> str:
    return "".join(f"{f.name}={_fmt(getattr(cfg, f.name))}\n" for f in fields(cfg))


def write_config(cfg: DaseConfig, path: str | Path) -> None:
    Path(path).write_text(emit_config(cfg), encoding="utf-8", newline="\n")
