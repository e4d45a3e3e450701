"""Per-example hardness: EMA of post-meta weights, plus hard-set selection."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class HardnessState:
    h: np.ndarray
    b: np.ndarray
    hit_counts: np.ndarray
    last_refresh_epoch: int = -1

    @property
    def n(self) -> int:
        return int(self.h.size)

    def to_dict(self) -> dict:
        return {"h": self.h.tolist(), "b": self.b.tolist(),
                "hit_counts": self.hit_counts.tolist(), "last_refresh_epoch": self.last_refresh_epoch}

    @classmethod
    def from_dict(cls, d: dict) -> "HardnessState":
        return cls(np.asarray(d["h"], float), np.asarray(d["b"], float),
                   np.asarray(d["hit_counts"], np.int64), int(d["last_refresh_epoch"]))

    def with_boosts(self, b, hit_counts, epoch: int) -> "HardnessState":
        return replace(self, b=np.asarray(b, float), hit_counts=np.asarray(hit_counts, np.int64),
                       last_refresh_epoch=epoch)


def init_hardness(n: int) -> HardnessState:
    """Neutral start: h = 1 (the mean post-renormalisation weight), no boosts."""
    if n < 1:
        raise ConfigError("hardness state needs at least one example")
    return HardnessState(np.ones(n), np.zeros(n), np.zeros(n, dtype=np.int64))


def ema_update(state: HardnessState, batch_ids, post_weights, gamma: float) -> HardnessState:
    """``h_i <- gamma h_i + (1 - gamma) w_i`` for batch members.

    Repeated ids (batches are drawn with replacement) are applied in batch order.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"EMA factor gamma must lie in [0, 1], got {gamma}")
    ids = np.asarray(batch_ids, dtype=np.int64).reshape(-1)
    w = getattr(post_weights, "normalized_clipped", post_weights)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.size != ids.size:
        raise DataError(f"{w.size} weights for {ids.size} batch ids")
    if ids.size and (ids.min() < 0 or ids.max() >= state.n):
        raise DataError("batch id outside the training set")
    h = state.h.copy()
    for i, wi in zip(ids, w):
        h[i] = gamma * h[i] + (1.0 - gamma) * wi
    return replace(state, h=h)


def hard_set_size(n: int, ratio: float) -> int:
    if not 0.0 < ratio <= 1.0:
        raise ConfigError(f"hard ratio must lie in (0, 1], got {ratio}")
    # round away float noise such as 0.1 * 30 = 3.0000000000000004
    return min(n, max(1, math.ceil(round(ratio * n, 9))))


def select_hard_set(state_or_h, ratio: float) -> np.ndarray:
    """Ids of the ceil(ratio * n) largest h, ordered by descending h then ascending id."""
    h = np.asarray(getattr(state_or_h, "h", state_or_h), dtype=np.float64)
    k = hard_set_size(h.size, ratio)
    order = np.lexsort((np.arange(h.size), -h))
    return order[:k]
