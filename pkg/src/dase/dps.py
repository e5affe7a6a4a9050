"""Deterministic policy similarity: one weight for all external rows of a batch.

The current policy is evaluated on the external states, the recorded actions
are compared with its outputs, and the resulting difference batch is modelled
as a Gaussian. Its divergence from the pure-exploration-noise Gaussian
N(0, sigma^2 I) is mapped through exp(-rho) to a weight in (0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .gaussian import (
    DEFAULT_RIDGE,
    GaussianMoments,
    estimate_moments,
    gaussian_jsd,
    gaussian_kl,
    reference_gaussian,
    similarity_weight,
)
from .replay import Batch, Transition

DIVERGENCES = ("jsd", "kl")


@dataclass(frozen=True)
class DpsConfig:
    divergence: str = "jsd"
    sigma: float = 0.1
    mc_samples: int = 0  # 0 selects the moment-matched JSD
    ridge: float = DEFAULT_RIDGE
    cov_mode: str = "sigma_sq"

    def __post_init__(self):
        if self.divergence not in DIVERGENCES:
            raise ValueError(f"divergence must be one of {DIVERGENCES}")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.mc_samples < 0:
            raise ValueError("mc_samples must be >= 0")


def action_difference_moments(diffs: np.ndarray, cfg: DpsConfig) -> GaussianMoments:
    if len(diffs) == 1:
        # one row: keep it as the mean, borrow the noise covariance
        ref = reference_gaussian(diffs.shape[1], cfg.sigma, cfg.cov_mode)
        return GaussianMoments(diffs[0].copy(), ref.cov)
    return estimate_moments(diffs, ridge=cfg.ridge)


def dissimilarity(diffs: np.ndarray, cfg: DpsConfig, rng: np.random.Generator | None = None) -> float:
    moments = action_difference_moments(diffs, cfg)
    ref = reference_gaussian(diffs.shape[1], cfg.sigma, cfg.cov_mode)
    if cfg.divergence == "kl":
        return gaussian_kl(moments, ref)
    return gaussian_jsd(moments, ref, samples=cfg.mc_samples, rng=rng)


def dps_weight(
    policy: Callable[[np.ndarray], np.ndarray],
    external: Batch | Sequence[Transition],
    cfg: DpsConfig = DpsConfig(),
    rng: np.random.Generator | None = None,
) -> float:
    """Similarity weight of the external transitions w.r.t. ``policy``."""
    if not isinstance(external, Batch):
        if len(external) == 0:
            raise ValueError("no external transitions to weigh")
        external = Batch.from_transitions(list(external))
    if len(external) == 0:
        raise ValueError("no external transitions to weigh")
    if not np.isfinite(external.actions).all():
        raise ValueError("external actions contain non-finite values")
    predicted = np.asarray(policy(external.states), dtype=np.float64)
    if predicted.shape != external.actions.shape:
        raise ValueError(f"policy output shape {predicted.shape} != stored actions {external.actions.shape}")
    diffs = external.actions - predicted
    return similarity_weight(dissimilarity(diffs, cfg, rng))
