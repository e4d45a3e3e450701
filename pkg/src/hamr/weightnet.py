"""Loss-to-weight network: a 1 -> H -> 1 MLP that turns batch-normalised
difficulty scores into per-example weights.

Forward pipeline for a batch of normalised losses ``z``::

    raw_i  = clip_max * sigmoid(w2 . tanh(w1 * z_i + b1) + b2)
    norm_i = raw_i / mean(raw)
    out_i  = clip(norm_i, clip_min, clip_max)

Flat parameter layout: ``[w1 (H), b1 (H), w2 (H), b2]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError

SIGMA_FLOOR = 1e-8
DEFAULT_CLIP = (0.05, 10.0)


@dataclass(frozen=True)
class WeightNetParams:
    flat: np.ndarray
    hidden_dim: int = 64

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64).reshape(-1)
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)
        if self.hidden_dim < 1:
            raise ConfigError("weight net hidden_dim must be >= 1")
        if flat.size != 3 * self.hidden_dim + 1:
            raise ShapeError(f"weight net with hidden_dim={self.hidden_dim} needs {3 * self.hidden_dim + 1} "
                             f"parameters, got {flat.size}")

    @property
    def size(self) -> int:
        return self.flat.size

    def unpack(self):
        H = self.hidden_dim
        f = self.flat
        return f[:H], f[H:2 * H], f[2 * H:3 * H], f[3 * H]

    @classmethod
    def from_arrays(cls, w1, b1, w2, b2) -> "WeightNetParams":
        w1 = np.asarray(w1, float).ravel()
        return cls(np.concatenate([w1, np.asarray(b1, float).ravel(),
                                   np.asarray(w2, float).ravel(), [float(b2)]]), w1.size)

    @classmethod
    def init(cls, hidden_dim: int = 64, rng: np.random.Generator | None = None,
             bound: float = 0.1) -> "WeightNetParams":
        rng = rng if rng is not None else np.random.default_rng(0)
        w1 = rng.uniform(-bound, bound, hidden_dim)
        w2 = rng.uniform(-bound, bound, hidden_dim)
        return cls.from_arrays(w1, np.zeros(hidden_dim), w2, 0.0)

    @classmethod
    def zeros(cls, hidden_dim: int = 64) -> "WeightNetParams":
        return cls(np.zeros(3 * hidden_dim + 1), hidden_dim)


@dataclass(frozen=True)
class BatchWeights:
    """Weights for one batch.

    ``normalized`` is the mean-1 vector before clipping and is kept for audit;
    ``normalized_clipped`` is what the optimiser consumes.
    """

    raw: np.ndarray
    normalized: np.ndarray
    normalized_clipped: np.ndarray
    batch_ids: np.ndarray
    tag: str = "pre"

    @property
    def values(self) -> np.ndarray:
        return self.normalized_clipped


def zscore_normalize(losses, sigma_floor: float = SIGMA_FLOOR) -> np.ndarray:
    """Batch z-score with population std; constant batches map to zeros."""
    losses = np.asarray(losses, dtype=np.float64).reshape(-1)
    if losses.size == 0:
        raise ConfigError("cannot normalise an empty batch")
    mu = losses.mean()
    sigma = losses.std()
    if not sigma > sigma_floor:
        return np.zeros_like(losses)
    return (losses - mu) / sigma


def _check_clip(clip_min: float, clip_max: float) -> None:
    if not (0 < clip_min < clip_max):
        raise ConfigError(f"need 0 < clip_min < clip_max, got [{clip_min}, {clip_max}]")


def _sigmoid(s):
    return 0.5 * (1.0 + np.tanh(0.5 * s))


def _hidden(theta: WeightNetParams, z: np.ndarray):
    w1, b1, w2, b2 = theta.unpack()
    h = np.tanh(np.outer(z, w1) + b1)
    return h, h @ w2 + b2


def forward_weights(theta: WeightNetParams, normalized_losses, batch_ids=None,
                    clip_min: float = DEFAULT_CLIP[0], clip_max: float = DEFAULT_CLIP[1],
                    tag: str = "pre") -> BatchWeights:
    _check_clip(clip_min, clip_max)
    z = np.asarray(normalized_losses, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(z)):
        raise ConfigError("normalised losses must be finite")
    _, s = _hidden(theta, z)
    raw = clip_max * _sigmoid(s)
    # sigmoid can underflow to exactly 0 for very negative scores
    raw = np.maximum(raw, np.finfo(float).tiny)
    normalized = raw / raw.mean()
    clipped = np.clip(normalized, clip_min, clip_max)
    ids = np.arange(z.size) if batch_ids is None else np.asarray(batch_ids)
    return BatchWeights(raw, normalized, clipped, ids, tag)


def weight_jacobian(theta: WeightNetParams, normalized_losses,
                    clip_min: float = DEFAULT_CLIP[0], clip_max: float = DEFAULT_CLIP[1]) -> np.ndarray:
    """d(out_i)/d(theta_j) as a (batch, |theta|) matrix.

    Differentiates through the mean-1 renormalisation. Rows of coordinates
    sitting on or beyond a clip bound are zero (subgradient choice).
    """
    _check_clip(clip_min, clip_max)
    z = np.asarray(normalized_losses, dtype=np.float64).reshape(-1)
    w1, _, w2, _ = theta.unpack()
    h, s = _hidden(theta, z)
    sig = _sigmoid(s)
    raw = clip_max * sig
    draw_ds = clip_max * sig * (1.0 - sig)
    dh = w2[None, :] * (1.0 - h ** 2)
    ds = np.hstack([dh * z[:, None], dh, h, np.ones((z.size, 1))])
    draw = draw_ds[:, None] * ds

    m = raw.mean()
    J = draw / m - np.outer(raw / m ** 2, draw.mean(axis=0))
    normalized = raw / m
    clipped = (normalized <= clip_min) | (normalized >= clip_max)
    J[clipped] = 0.0
    return J
