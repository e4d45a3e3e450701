"""Hardness-aware sampling distribution and seeded batch draws.

``p_i ∝ (h_i + eps)^tau * (1 + lam * b_i)``. Batches are i.i.d. draws with
replacement by inverse-CDF on uniforms from a PCG64 generator, so a given
seed reproduces the same batches on any platform numpy supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

RNG_ALGORITHM = "pcg64"


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class SamplingDistribution:
    p: np.ndarray
    tau: float = 1.0
    lam: float = 0.0
    epsilon: float = 1e-6

    @property
    def n(self) -> int:
        return int(self.p.size)

    def entropy(self) -> float:
        p = self.p[self.p > 0]
        return float(-(p * np.log(p)).sum())


def uniform_distribution(n: int) -> SamplingDistribution:
    return SamplingDistribution(np.full(n, 1.0 / n), 0.0, 0.0)


def sampling_probabilities(h, b, tau: float, lam: float, epsilon: float = 1e-6) -> SamplingDistribution:
    if not tau > 0:
        raise ConfigError(f"temperature tau must be > 0, got {tau}")
    if not epsilon > 0:
        raise ConfigError(f"epsilon must be > 0, got {epsilon}")
    if not lam >= 0:
        raise ConfigError(f"boost strength lambda must be >= 0, got {lam}")
    h = np.asarray(h, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if h.shape != b.shape or h.size == 0:
        raise ConfigError(f"h and b must be equal-length and non-empty ({h.size} vs {b.size})")
    if np.any(h < 0) or np.any(b < 0):
        raise ConfigError("hardness and boost scores must be nonnegative")
    # log-space keeps tiny tau and large h ranges well conditioned
    log_u = tau * np.log(h + epsilon) + np.log1p(lam * b)
    if log_u.max() == log_u.min():
        return SamplingDistribution(np.full(h.size, 1.0 / h.size), tau, lam, epsilon)
    u = np.exp(log_u - log_u.max())
    return SamplingDistribution(u / u.sum(), tau, lam, epsilon)


def draw_batch(dist: SamplingDistribution, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """``batch_size`` ids drawn with replacement; advances ``rng``."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    cdf = np.cumsum(dist.p)
    u = rng.random(batch_size) * cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), dist.n - 1)
