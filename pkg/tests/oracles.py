"""Independent reference computations used by the tests.

Nothing here calls into the gradient, ranking or counting code under test;
each oracle only evaluates forward quantities (losses) or works from first
principles (pairwise distances, confusion matrices by loops).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial.distance import cdist

FD_STEP = 1e-5


def central_difference(f, x0: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = step
        grad[j] = (f(x0 + e) - f(x0 - e)) / (2 * step)
    return grad


def central_difference_jacobian(f, x0: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    cols = []
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = step
        cols.append((np.asarray(f(x0 + e)) - np.asarray(f(x0 - e))) / (2 * step))
    return np.stack(cols, axis=1)


def rel_error(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def naive_cross_entropy(W, b, x, y) -> float:
    """Token cross-entropy written out with python floats (linear model)."""
    logits = [sum(W[c][j] * x[j] for j in range(len(x))) + b[c] for c in range(len(b))]
    m = max(logits)
    lse = m + math.log(sum(math.exp(z - m) for z in logits))
    return lse - logits[y]


def brute_force_knn(vectors, k: int, metric: str):
    """Rankings from scipy pairwise distances and python's stable sort."""
    x = np.asarray(vectors, float)
    D = cdist(x, x, metric="cosine" if metric == "cosine" else "euclidean")
    out = []
    for i in range(x.shape[0]):
        others = [j for j in range(x.shape[0]) if j != i]
        others.sort(key=lambda j: (round(D[i, j], 12), j))
        out.append(others[:k])
    return out


def brute_force_f1(pred, gold, num_classes: int):
    per = {}
    for c in range(num_classes):
        tp = sum(1 for p, g in zip(pred, gold) if p == c and g == c)
        fp = sum(1 for p, g in zip(pred, gold) if p == c and g != c)
        fn = sum(1 for p, g in zip(pred, gold) if p != c and g == c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        per[c] = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    macro = sum(per.values()) / num_classes
    micro = sum(1 for p, g in zip(pred, gold) if p == g) / len(gold)
    return per, macro, micro
