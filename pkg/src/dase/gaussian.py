"""Multivariate Gaussian moments and divergences over action-difference batches."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RIDGE = 1e-6


class DegenerateBatchError(ValueError):
    """Fewer than two rows: the unbiased covariance is undefined."""


@dataclass(frozen=True)
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def reference_gaussian(n: int, sigma: float, cov_mode: str = "sigma_sq") -> GaussianMoments:
    """Zero-mean isotropic Gaussian describing pure exploration noise.

    ``cov_mode="sigma_sq"`` gives covariance sigma**2 * I, ``"sigma"`` gives sigma * I.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if cov_mode == "sigma_sq":
        var = sigma**2
    elif cov_mode == "sigma":
        var = sigma
    else:
        raise ValueError(f"unknown cov_mode {cov_mode!r}")
    return GaussianMoments(np.zeros(n), var * np.eye(n))


def estimate_moments(action_diffs: np.ndarray, ridge: float = DEFAULT_RIDGE) -> GaussianMoments:
    """Sample mean and unbiased covariance of the rows, plus ``ridge * I``."""
    x = np.asarray(action_diffs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"expected a (k, n) array, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise ValueError("action differences contain non-finite values")
    k, n = x.shape
    if k < 2:
        raise DegenerateBatchError("need at least two rows to estimate a covariance")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (k - 1)
    cov = 0.5 * (cov + cov.T) + ridge * np.eye(n)
    return GaussianMoments(mean, cov)


def _chol(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("covariance is not positive definite") from exc


def _logdet(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def gaussian_kl(p: GaussianMoments, q: GaussianMoments) -> float:
    """Closed-form KL(p || q) in nats."""
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    lq = _chol(q.cov)
    lp = _chol(p.cov)
    n = p.dim
    # tr(Sq^-1 Sp) via the Cholesky factor of Sq
    a = np.linalg.solve(lq, p.cov)
    trace = float(np.trace(np.linalg.solve(lq.T, a)))
    diff = q.mean - p.mean
    z = np.linalg.solve(lq, diff)
    maha = float(z @ z)
    kl = 0.5 * (trace + maha - n + _logdet(lq) - _logdet(lp))
    # rounding can leave a tiny negative value for identical arguments
    return max(kl, 0.0)


def moment_matched_mixture(p: GaussianMoments, q: GaussianMoments) -> GaussianMoments:
    """Single Gaussian with the first two moments of the 50/50 mixture of p and q."""
    d = p.mean - q.mean
    mean = 0.5 * (p.mean + q.mean)
    cov = 0.5 * (p.cov + q.cov) + 0.25 * np.outer(d, d)
    return GaussianMoments(mean, cov)


def _logpdf(x: np.ndarray, g: GaussianMoments) -> np.ndarray:
    chol = _chol(g.cov)
    z = np.linalg.solve(chol, (x - g.mean).T)
    n = g.dim
    return -0.5 * (np.sum(z * z, axis=0) + n * np.log(2 * np.pi) + _logdet(chol))


def _mc_jsd(p: GaussianMoments, q: GaussianMoments, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    def half(a: GaussianMoments, b: GaussianMoments) -> np.ndarray:
        x = rng.multivariate_normal(a.mean, a.cov, size=samples, method="cholesky")
        la, lb = _logpdf(x, a), _logpdf(x, b)
        lm = np.logaddexp(la, lb) - np.log(2.0)
        return la - lm

    tp, tq = half(p, q), half(q, p)
    est = 0.5 * (tp.mean() + tq.mean())
    se = 0.5 * np.sqrt(tp.var(ddof=1) / samples + tq.var(ddof=1) / samples)
    return float(est), float(se)


def gaussian_jsd(
    p: GaussianMoments,
    q: GaussianMoments,
    samples: int = 0,
    rng: np.random.Generator | None = None,
) -> float:
    """Jensen-Shannon divergence between two Gaussians.

    With ``samples == 0`` the mixture is replaced by its moment-matched Gaussian
    and both halves are closed-form KLs; this can exceed ln 2. With
    ``samples > 0`` a Monte Carlo estimate against the true mixture is returned.
    """
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    if samples < 0:
        raise ValueError("samples must be >= 0")
    if samples == 0:
        m = moment_matched_mixture(p, q)
        return 0.5 * gaussian_kl(p, m) + 0.5 * gaussian_kl(q, m)
    if rng is None:
        rng = np.random.default_rng(0)
    return max(_mc_jsd(p, q, samples, rng)[0], 0.0)


def gaussian_jsd_mc(
    p: GaussianMoments, q: GaussianMoments, samples: int, rng: np.random.Generator
) -> tuple[float, float]:
    """Monte Carlo JSD estimate together with its standard error."""
    if samples < 2:
        raise ValueError("need at least two samples for a standard error")
    return _mc_jsd(p, q, samples, rng)


def similarity_weight(rho: float) -> float:
    if not rho >= 0:  # also rejects NaN
        raise ValueError(f"dissimilarity must be non-negative, got {rho}")
    return float(np.exp(-rho))
