"""Comparison objectives: focal loss, multi-class dice loss, inverse class
frequency (ICF) and effective-number (EN) class weights.

Each loss has a closed-form value function plus the gradient w.r.t. logits
that the trainer backpropagates through the task model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

P_FLOOR = 1e-12


@dataclass(frozen=True)
class ClassWeights:
    w: np.ndarray
    scheme: str


def _counts(class_counts) -> np.ndarray:
    counts = np.asarray(class_counts, dtype=np.float64).reshape(-1)
    if counts.size == 0 or np.any(counts < 1):
        raise DataError(f"class counts must all be >= 1, got {counts.tolist()}")
    return counts


def icf_weights(class_counts) -> ClassWeights:
    """``w_c = (1/f_c) / mean_j(1/f_j)`` with ``f`` the empirical class frequency."""
    counts = _counts(class_counts)
    inv = counts.sum() / counts
    return ClassWeights(inv / inv.mean(), "icf")


def en_weights(class_counts, beta_en: float = 0.9999, normalize: bool = False) -> ClassWeights:
    """``w_y = (1 - beta) / (1 - beta^n_y)``; optionally rescaled to mean 1."""
    if not 0.0 <= beta_en < 1.0:
        raise ConfigError(f"effective-number beta must lie in [0, 1), got {beta_en}")
    counts = _counts(class_counts)
    # expm1/log1p keep 1 - beta^n accurate for beta close to 1
    w = (1.0 - beta_en) / -np.expm1(counts * np.log(beta_en)) if beta_en > 0 else np.ones_like(counts)
    if normalize:
        w = w / w.mean()
    return ClassWeights(w, "en")


def uniform_weights(num_classes: int) -> ClassWeights:
    return ClassWeights(np.ones(num_classes), "uniform")


def focal_alpha(class_counts, beta_en: float = 0.9999) -> np.ndarray:
    """Class-balanced alpha for focal loss: EN weights rescaled to mean 1."""
    return en_weights(class_counts, beta_en, normalize=True).w


def _true_prob(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.maximum(probs[np.arange(y.size), y], P_FLOOR)


def focal_loss(probs, y, gamma_f: float = 2.0, alpha_weights=None) -> np.ndarray:
    """Per-row ``-alpha_y (1 - p_t)^gamma log p_t``; ``alpha_weights`` is per class (None = 1)."""
    if gamma_f < 0:
        raise ConfigError(f"focal gamma must be >= 0, got {gamma_f}")
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    pt = _true_prob(probs, y)
    alpha = 1.0 if alpha_weights is None else np.asarray(alpha_weights, float)[y]
    return -alpha * (1.0 - pt) ** gamma_f * np.log(pt)


def focal_logit_grad(probs, y, gamma_f: float = 2.0, alpha_weights=None) -> np.ndarray:
    """d(focal_i)/d(logits_i) for every row."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    pt = _true_prob(probs, y)
    alpha = 1.0 if alpha_weights is None else np.asarray(alpha_weights, float)[y]
    one_m = 1.0 - pt
    if gamma_f == 0:
        dl_dpt = -alpha / pt
    else:
        dl_dpt = -alpha * (one_m ** gamma_f / pt - gamma_f * one_m ** (gamma_f - 1) * np.log(pt))
    onehot = np.zeros_like(probs)
    onehot[np.arange(y.size), y] = 1.0
    # dp_t/dz = p_t (e_y - p)
    return (dl_dpt * pt)[:, None] * (onehot - probs)


def dice_per_class(probs_batch, onehot_batch, smooth_eps: float = 1e-5) -> np.ndarray:
    probs = np.atleast_2d(np.asarray(probs_batch, dtype=np.float64))
    y = np.atleast_2d(np.asarray(onehot_batch, dtype=np.float64))
    inter = (y * probs).sum(axis=0)
    denom = y.sum(axis=0) + probs.sum(axis=0) + smooth_eps
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(denom > 0, (2.0 * inter + smooth_eps) / denom, 1.0)
    return 1.0 - ratio


def dice_loss(probs_batch, onehot_batch, smooth_eps: float = 1e-5) -> float:
    """Per-class dice loss over the batch, averaged over classes."""
    return float(dice_per_class(probs_batch, onehot_batch, smooth_eps).mean())


def dice_logit_grad(probs_batch, onehot_batch, smooth_eps: float = 1e-5) -> np.ndarray:
    """d(dice_loss)/d(logits) for every row of the batch."""
    probs = np.atleast_2d(np.asarray(probs_batch, dtype=np.float64))
    y = np.atleast_2d(np.asarray(onehot_batch, dtype=np.float64))
    C = probs.shape[1]
    num = 2.0 * (y * probs).sum(axis=0) + smooth_eps
    denom = y.sum(axis=0) + probs.sum(axis=0) + smooth_eps
    safe = np.where(denom > 0, denom, 1.0)
    dp = -(2.0 * y / safe - num / safe ** 2) / C
    dp[:, denom <= 0] = 0.0
    # softmax Jacobian-vector product per row
    return probs * (dp - (dp * probs).sum(axis=1, keepdims=True))


def onehot(y, num_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    out = np.zeros((y.size, num_classes))
    out[np.arange(y.size), y] = 1.0
    return out
