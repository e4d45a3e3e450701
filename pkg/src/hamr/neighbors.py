"""k-nearest-neighbour search over precomputed embeddings and neighbourhood boosts.

The exact index is brute force with a deterministic ordering (distance, then
ascending id). The approximate index probes the closest k-means cells and
re-ranks exactly; it checks its own recall against the exact index at build
time and refuses to exist below the required recall.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError, DataError


class Metric(str, Enum):
    COSINE = "cosine"
    L2 = "l2"

    @classmethod
    def parse(cls, value) -> "Metric":
        try:
            return cls(str(getattr(value, "value", value)).lower())
        except ValueError:
            raise ConfigError(f"unknown metric {value!r} (expected cosine or l2)") from None


@dataclass(frozen=True)
class NeighborLists:
    k: int
    query_ids: np.ndarray
    lists: np.ndarray
    distances: np.ndarray


def _validate(vectors, metric: Metric) -> np.ndarray:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"embeddings must be a 2-D matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError("embeddings contain NaN or Inf")
    if metric is Metric.COSINE:
        norms = np.linalg.norm(x, axis=1)
        bad = np.flatnonzero(norms == 0)
        if bad.size:
            raise DataError(f"zero-norm embedding rows under cosine metric: {bad[:10].tolist()}")
    return x


class ExactIndex:
    approximate = False

    def __init__(self, vectors, metric: Metric | str = Metric.COSINE, chunk: int = 256):
        self.metric = Metric.parse(metric)
        x = _validate(vectors, self.metric)
        if x.shape[0] < 2:
            raise ConfigError("a neighbour index needs at least two points")
        if self.metric is Metric.COSINE:
            x = x / np.linalg.norm(x, axis=1, keepdims=True)
        x.setflags(write=False)
        self.vectors = x
        self.chunk = chunk

    @property
    def n(self) -> int:
        return self.vectors.shape[0]

    def distances(self, query_ids, candidates=None) -> np.ndarray:
        q = self.vectors[np.asarray(query_ids)]
        pool = self.vectors if candidates is None else self.vectors[candidates]
        if self.metric is Metric.COSINE:
            return np.maximum(1.0 - q @ pool.T, 0.0)
        return np.sqrt(((q[:, None, :] - pool[None, :, :]) ** 2).sum(axis=-1))

    def _check_k(self, k: int) -> None:
        if not 1 <= k <= self.n - 1:
            raise ConfigError(f"k must lie in [1, {self.n - 1}], got {k}")

    def query(self, query_ids, k: int) -> NeighborLists:
        self._check_k(k)
        query_ids = np.asarray(query_ids, dtype=np.int64).reshape(-1)
        lists = np.empty((query_ids.size, k), dtype=np.int64)
        dists = np.empty((query_ids.size, k))
        ids = np.arange(self.n)
        for start in range(0, query_ids.size, self.chunk):
            block = query_ids[start:start + self.chunk]
            D = self.distances(block)
            D[np.arange(block.size), block] = np.inf
            for r, row in enumerate(D):
                order = np.lexsort((ids, row))[:k]
                lists[start + r] = order
                dists[start + r] = row[order]
        return NeighborLists(k, query_ids, lists, dists)


class ApproximateIndex(ExactIndex):
    """Coarse k-means cells; each query scans its ``nprobe`` nearest cells."""

    approximate = True

    def __init__(self, vectors, metric=Metric.COSINE, n_cells: int | None = None, nprobe: int = 4,
                 seed: int = 0, min_recall: float = 0.95, recall_k: int = 10, recall_queries: int = 200):
        super().__init__(vectors, metric)
        from scipy.cluster.vq import kmeans2

        self.n_cells = n_cells or max(1, int(np.sqrt(self.n)))
        self.nprobe = min(nprobe, self.n_cells)
        centroids, assign = kmeans2(self.vectors, self.n_cells, seed=seed, minit="++")
        self.centroids = centroids
        self.cells = [np.flatnonzero(assign == c) for c in range(self.n_cells)]
        rng = np.random.default_rng(seed)
        k = min(recall_k, self.n - 1)
        sample = rng.choice(self.n, size=min(recall_queries, self.n), replace=False)
        self.recall = recall_at_k(self, ExactIndex(self.vectors, self.metric), sample, k)
        if self.recall < min_recall:
            raise ConfigError(f"approximate index recall@{k} = {self.recall:.3f} below required {min_recall}")

    def query(self, query_ids, k: int) -> NeighborLists:
        self._check_k(k)
        query_ids = np.asarray(query_ids, dtype=np.int64).reshape(-1)
        lists = np.empty((query_ids.size, k), dtype=np.int64)
        dists = np.empty((query_ids.size, k))
        cd = ((self.vectors[query_ids][:, None, :] - self.centroids[None]) ** 2).sum(-1)
        for r, q in enumerate(query_ids):
            probe = np.argsort(cd[r], kind="stable")[:self.nprobe]
            cand = np.concatenate([self.cells[c] for c in probe])
            cand = np.sort(cand[cand != q])
            if cand.size < k:
                cand = np.delete(np.arange(self.n), q)
            row = self.distances([q], cand)[0]
            order = np.lexsort((cand, row))[:k]
            lists[r] = cand[order]
            dists[r] = row[order]
        return NeighborLists(k, query_ids, lists, dists)


def build_index(embeddings, metric: Metric | str = Metric.COSINE, approximate: bool = False, **kwargs):
    if approximate:
        return ApproximateIndex(embeddings, metric, **kwargs)
    return ExactIndex(embeddings, metric)


def knn_query(index: ExactIndex, query_ids, k: int) -> NeighborLists:
    return index.query(query_ids, k)


def recall_at_k(index, exact: ExactIndex, query_ids, k: int) -> float:
    got = index.query(query_ids, k).lists
    want = exact.query(query_ids, k).lists
    hits = sum(len(set(a) & set(b)) for a, b in zip(got, want))
    return hits / want.size


def compute_boosts(hard_ids, neighbor_lists: NeighborLists | np.ndarray, n: int):
    """Hit counts of each example across the hard examples' neighbour lists,
    and boosts ``b = hits / max(hits)`` (all zero when nothing was hit)."""
    hard_ids = np.asarray(hard_ids).reshape(-1)
    if hard_ids.size == 0:
        raise ConfigError("boosts need at least one hard example")
    lists = getattr(neighbor_lists, "lists", neighbor_lists)
    flat = np.asarray(lists, dtype=np.int64).reshape(-1)
    hits = np.bincount(flat, minlength=n)[:n] if flat.size else np.zeros(n, dtype=np.int64)
    top = hits.max() if hits.size else 0
    b = hits / top if top > 0 else np.zeros(n)
    return b, hits.astype(np.int64)
