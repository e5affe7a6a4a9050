"""Command line entry point: ``dase run|verify|matrix|report``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, parse_config
from .experiments import parse_matrix, report, run_matrix, write_run
from .runner import run

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# flag name -> config key
_RUN_FLAGS = {
    "env": "env",
    "algo": "algo",
    "agents": "agents",
    "steps": "total_steps",
    "buffer": "buffer_size",
    "correction": "correction",
    "seed": "seed",
}


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    out = {}
    for flag, key in _RUN_FLAGS.items():
        val = getattr(args, flag)
        if val is not None:
            out[key] = val
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, _overrides(args))
    record = run(cfg)
    out = write_run(record, args.out)
    for agent in sorted(record.evals):
        if record.evals[agent]:
            print(f"agent {agent}: final last-10 mean return {record.final_return(agent):.2f}")
    print(f"wrote {out} in {record.wall_clock:.1f}s")
    return 0


def verify_table(seeds: int, gamma: float, q_seeds: int, q_steps: int) -> list[tuple[str, bool, str]]:
    from .tabular import (
        dps_weight_fn,
        lr_schedule,
        operator_contraction_check,
        random_mdp,
        random_policy,
        value_iteration,
        weighted_q_learning,
    )

    rows = []
    worst = 0.0
    worst_excess = -np.inf
    for seed in range(seeds):
        rng = np.random.default_rng(seed)
        mdp = random_mdp(int(rng.integers(2, 7)), int(rng.integers(2, 4)), gamma, rng)
        pi = random_policy(mdp.n_states, mdp.n_actions, rng)
        mu = random_policy(mdp.n_states, mdp.n_actions, rng)
        lam = rng.uniform() * np.minimum(1.0, pi / mu)
        worst = max(worst, operator_contraction_check(mdp, pi, lam, 20, rng, behavior=mu))
        for lam_u in (0.0, 0.25, 0.5, 0.75, 1.0):
            ratio = operator_contraction_check(mdp, pi, lam_u, 20, rng)
            worst_excess = max(worst_excess, ratio - gamma * (1 - lam_u))
    rows.append(("ratio <= gamma (random behaviour)", worst <= gamma + 1e-9, f"max ratio {worst:.6f}"))
    rows.append(("ratio <= gamma(1-lambda) (uniform lambda)", worst_excess <= 1e-9, f"max excess {worst_excess:.2e}"))

    q_gamma = 0.9
    for name in ("0", "0.5", "1", "dps"):
        errs = []
        for seed in range(q_seeds):
            rng = np.random.default_rng(1000 + seed)
            mdp = random_mdp(5, 2, q_gamma, rng)
            q_star = value_iteration(mdp, 1e-12)
            wfn = dps_weight_fn(rng) if name == "dps" else (lambda _t, v=float(name): v)
            q = weighted_q_learning(mdp, lr_schedule(), wfn, q_steps, rng)
            errs.append(float(np.max(np.abs(q - q_star))))
        rows.append((f"Q-learning -> Q* (lambda={name})", max(errs) < 0.05, f"max sup-error {max(errs):.4f}"))
    return rows


def cmd_verify(args: argparse.Namespace) -> int:
    rows = verify_table(args.seeds, args.gamma, args.q_seeds, args.q_steps)
    width = max(len(r[0]) for r in rows)
    for name, ok, detail in rows:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    return 0 if all(ok for _, ok, _ in rows) else 1


def cmd_matrix(args: argparse.Namespace) -> int:
    matrix = parse_matrix(Path(args.matrix).read_text(encoding="utf-8"))
    results = run_matrix(matrix, args.out)
    for r in results:
        print(f"{r.name}: {'FAILED ' + r.error if r.failed else f'{r.score:.2f}'}")
    print(f"summary: {Path(args.out) / 'summary.csv'}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    print(report(args.run_dir))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dase", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log evaluation progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train K learners on a shared buffer")
    r.add_argument("--config", help="key=value config file")
    r.add_argument("--env")
    r.add_argument("--algo", choices=["td3", "ddpg"])
    r.add_argument("--agents")
    r.add_argument("--steps", help="environment steps per learner")
    r.add_argument("--buffer", help="shared replay capacity")
    r.add_argument("--correction", choices=["dps_jsd", "dps_kl", "none"])
    r.add_argument("--seed")
    r.add_argument("--set", action="append", metavar="KEY=VALUE", help="any other config key")
    r.add_argument("--out", default="results")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="finite-MDP contraction and convergence checks")
    v.add_argument("--seeds", type=int, default=50)
    v.add_argument("--gamma", type=float, default=0.99)
    v.add_argument("--q-seeds", type=int, default=3)
    v.add_argument("--q-steps", type=int, default=200_000)
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("matrix", help="run an ablation matrix")
    m.add_argument("matrix", help="matrix file (key=value, comma-separated axes)")
    m.add_argument("--out", default="results/matrix")
    m.set_defaults(func=cmd_matrix)

    rep = sub.add_parser("report", help="summarise a run directory")
    rep.add_argument("run_dir")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
