"""Result files, ablation matrices and summary tables."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from . import __version__
from .config import FIXED_SETTINGS, ConfigError, DaseConfig, config_from_mapping, write_config
from .runner import RunRecord, run

log = logging.getLogger(__name__)

SMOOTHING_WINDOW = 25
LAST_EVALS = 10


def sliding_mean(values: Iterable[float], window: int = SMOOTHING_WINDOW) -> np.ndarray:
    """Trailing moving average; the first entries average over what is available."""
    x = np.asarray(list(values), dtype=np.float64)
    if len(x) == 0:
        return x
    c = np.cumsum(np.insert(x, 0, 0.0))
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def manifest(record: RunRecord) -> dict[str, Any]:
    return {
        "version": __version__,
        "config": record.config.to_dict(),
        "fixed": dict(FIXED_SETTINGS),
        "wall_clock_seconds": round(record.wall_clock, 3),
    }


def config_from_manifest(path: str | Path) -> DaseConfig:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return config_from_mapping(data["config"]).resolved()


def write_run(record: RunRecord, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for agent, rows in sorted(record.evals.items()):
        with open(out / f"agent_{agent}_eval.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "eval_return"])
            w.writerows((step, repr(float(ret))) for step, ret in rows)
    with open(out / "diagnostics.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "agent", "lambda", "critic_loss", "actor_obj"])
        for step, agent, lam, closs, aobj in record.diagnostics:
            w.writerow([step, agent, repr(float(lam)), repr(float(closs)), "" if aobj is None else repr(float(aobj))])
    write_config(record.config, out / "config.txt")
    (out / "manifest.json").write_text(json.dumps(manifest(record), indent=2) + "\n", encoding="utf-8")
    return out


def read_evals(run_dir: str | Path) -> dict[int, list[tuple[int, float]]]:
    out = {}
    for path in sorted(Path(run_dir).glob("agent_*_eval.csv")):
        agent = int(path.stem.split("_")[1])
        with open(path, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        out[agent] = [(int(r["step"]), float(r["eval_return"])) for r in rows]
    return out


def final_score(evals: Mapping[int, list[tuple[int, float]]], last: int = LAST_EVALS) -> float:
    """Mean over agents of each agent's mean return over its last ``last`` evaluations."""
    per_agent = [np.mean([r for _, r in rows[-last:]]) for rows in evals.values() if rows]
    return float(np.mean(per_agent)) if per_agent else math.nan


def method_label(cfg: DaseConfig) -> str:
    if cfg.agents == 1:
        return f"{cfg.algo.upper()} (single agent)"
    if cfg.correction == "none":
        return "ES-DASE"
    if cfg.correction == "dps_kl":
        return "KL-DASE"
    return f"DASE (K = {cfg.agents})"


@dataclass
class ExperimentMatrix:
    """Cross product of ``axes`` over a base config; ``seeds`` is explicit."""

    base: DaseConfig
    axes: dict[str, list[Any]] = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0])

    def cells(self) -> list[tuple[str, DaseConfig]]:
        keys = list(self.axes)
        out = []
        for combo in itertools.product(*(self.axes[k] for k in keys)):
            values = dict(zip(keys, combo))
            for seed in self.seeds:
                cfg = config_from_mapping({**values, "seed": seed}, self.base)
                name = "_".join(f"{k}-{v}" for k, v in values.items())
                name = f"{name}_seed-{seed}" if name else f"seed-{seed}"
                out.append((name, cfg))
        names = [n for n, _ in out]
        if len(set(names)) != len(names):
            raise ConfigError("matrix cells do not have unique output names")
        return out


def parse_matrix(text: str) -> ExperimentMatrix:
    """key=value lines; comma-separated values on a key make it an axis. ``seeds`` lists seeds."""
    from .config import parse_lines

    raw = parse_lines(text.splitlines())
    seeds = [int(s) for s in raw.pop("seeds", "0").split(",")]
    axes, fixed = {}, {}
    for key, val in raw.items():
        parts = [p.strip() for p in val.split(",")]
        if len(parts) > 1:
            axes[key] = parts
        else:
            fixed[key] = val
    base = config_from_mapping(fixed)
    # validate every axis value early so a typo fails before any cell runs
    for key, vals in axes.items():
        for v in vals:
            config_from_mapping({key: v}, base)
    return ExperimentMatrix(base=base, axes=axes, seeds=seeds)


@dataclass
class CellResult:
    name: str
    config: DaseConfig
    score: float
    failed: bool
    error: str = ""


def run_matrix(matrix: ExperimentMatrix, out_dir: str | Path) -> list[CellResult]:
    """Run every cell, write each run and ``summary.csv``; a failing cell does not stop the rest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for name, cfg in matrix.cells():
        try:
            record = run(cfg)
            write_run(record, out / name)
            score = final_score(record.evals)
            failed = not math.isfinite(score)
            results.append(CellResult(name, record.config, score, failed, "non-finite score" if failed else ""))
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            log.warning("cell %s failed: %s", name, exc)
            results.append(CellResult(name, cfg, math.nan, True, f"{type(exc).__name__}: {exc}"))
    write_summary(results, out / "summary.csv")
    return results


def summarize(results: list[CellResult]) -> tuple[list[str], list[str], dict[tuple[str, str], tuple[float, int, int]]]:
    """Seed-averaged score per (method, environment) plus run and failure counts."""
    groups: dict[tuple[str, str], list[CellResult]] = {}
    for r in results:
        cfg = r.config
        label = f"{method_label(cfg)} [buffer {cfg.buffer_size}]"
        groups.setdefault((label, cfg.env), []).append(r)
    methods = sorted({k[0] for k in groups})
    envs = sorted({k[1] for k in groups})
    table = {}
    for key, rs in groups.items():
        ok = [r.score for r in rs if not r.failed]
        table[key] = (float(np.mean(ok)) if ok else math.nan, len(rs), sum(r.failed for r in rs))
    return methods, envs, table


def write_summary(results: list[CellResult], path: str | Path) -> None:
    methods, envs, table = summarize(results)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", *envs, "runs", "failed_runs"])
        for m in methods:
            row = [m]
            runs = failed = 0
            for e in envs:
                score, n, nf = table.get((m, e), (math.nan, 0, 0))
                row.append(f"{score:.2f}" if math.isfinite(score) else "nan")
                runs += n
                failed += nf
            w.writerow(row + [runs, failed])


def report(run_dir: str | Path) -> str:
    """Plain-text digest of a run directory: final scores and smoothed curves."""
    evals = read_evals(run_dir)
    lines = []
    for agent, rows in sorted(evals.items()):
        raw = [r for _, r in rows]
        smooth = sliding_mean(raw)
        lines.append(f"agent {agent}: {len(rows)} evaluations, last-{LAST_EVALS} mean {np.mean(raw[-LAST_EVALS:]):.2f}")
        lines.append("  step,eval_return,smoothed")
        for (step, r), s in zip(rows, smooth):
            lines.append(f"  {step},{r:.4f},{s:.4f}")
    if evals:
        lines.append(f"overall last-{LAST_EVALS} mean over agents: {final_score(evals):.2f}")
    return "\n".join(lines)
