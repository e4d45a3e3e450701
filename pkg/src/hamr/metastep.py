"""Bi-level reweighting step: balanced meta-set, virtual inner step, exact
one-step meta-gradient for the weight net, and the real outer update.

The meta-gradient uses the one-step chain rule. With
``phi' = phi - alpha * sum_i w_i(theta) g_i`` and example losses held constant
w.r.t. phi::

    dL_meta/dtheta = -alpha * J^T d,   d_i = <g_i, grad L_meta(phi')>

where ``J`` is :func:`hamr.weightnet.weight_jacobian` on the batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numpy as np

from . import diffmodel as dm
from .errors import ConfigError, ShapeError
from .weightnet import (DEFAULT_CLIP, BatchWeights, WeightNetParams, forward_weights,
                        weight_jacobian, zscore_normalize)

VALIDATION = "validation"
TRAIN_TOPUP = "train_topup"


@dataclass(frozen=True)
class MetaSet:
    example_ids: np.ndarray
    source: tuple[str, ...]
    target_count: int = 0

    def __len__(self) -> int:
        return int(self.example_ids.size)


def build_meta_set(example_classes: np.ndarray, train_ids, valid_ids, num_classes: int,
                   seed: int | np.random.Generator = 0) -> MetaSet:
    """Full validation split plus per-class top-ups drawn from train.

    Each class is topped up (uniformly, without replacement) until it reaches
    the median validation class count, rounded up. Classes already at or above
    the median are left alone; classes short of train examples take all they have.
    Classes absent from validation count as 0 in the median.
    """
    example_classes = np.asarray(example_classes)
    train_ids = np.asarray(train_ids, dtype=np.int64)
    valid_ids = np.asarray(valid_ids, dtype=np.int64)
    if valid_ids.size == 0:
        raise ConfigError("meta set needs a non-empty validation split")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    val_counts = np.bincount(example_classes[valid_ids], minlength=num_classes)
    target = int(math.ceil(float(np.median(val_counts))))
    ids = [int(i) for i in valid_ids]
    source = [VALIDATION] * len(ids)
    train_classes = example_classes[train_ids]
    for c in range(num_classes):
        need = target - int(val_counts[c])
        if need <= 0:
            continue
        pool = train_ids[train_classes == c]
        take = min(need, pool.size)
        if take:
            chosen = np.sort(rng.choice(pool, size=take, replace=False))
            ids.extend(int(i) for i in chosen)
            source.extend([TRAIN_TOPUP] * take)
    return MetaSet(np.array(ids, dtype=np.int64), tuple(source), target)


def weighted_direction(grads: np.ndarray, weights) -> np.ndarray:
    """sum_i w_i g_i for a (B, P) gradient matrix."""
    w = weights.values if isinstance(weights, BatchWeights) else np.asarray(weights, float)
    if w.shape != (grads.shape[0],):
        raise ShapeError(f"{w.size} weights for a batch of {grads.shape[0]}")
    return w @ grads


def inner_step(phi: dm.TaskModelParams, grads: np.ndarray, pre_weights, alpha: float) -> dm.TaskModelParams:
    """Virtual step ``phi' = phi - alpha * sum_i w_i^pre g_i`` (phi untouched)."""
    return dm.apply_step(phi, weighted_direction(grads, pre_weights), alpha)


def outer_step(phi: dm.TaskModelParams, grads: np.ndarray, post_weights, alpha: float) -> dm.TaskModelParams:
    """Actual update with post-meta weights; same contract as :func:`inner_step`."""
    return dm.apply_step(phi, weighted_direction(grads, post_weights), alpha)


def meta_loss(phi_prime: dm.TaskModelParams, meta_batch: dm.Batch) -> float:
    """Unweighted mean cross-entropy over the meta examples (always MEAN_CE)."""
    if meta_batch.size == 0:
        raise ConfigError("meta set is empty")
    return float(dm.batch_losses(phi_prime, meta_batch, dm.Aggregation.MEAN_CE).mean())


def meta_loss_and_grad(phi_prime: dm.TaskModelParams, meta_batch: dm.Batch):
    if meta_batch.size == 0:
        raise ConfigError("meta set is empty")
    return dm.mean_loss_and_gradient(phi_prime, meta_batch, dm.Aggregation.MEAN_CE)


def meta_gradient(phi: dm.TaskModelParams, grads: np.ndarray, normalized_losses, theta: WeightNetParams,
                  alpha: float, meta_batch: dm.Batch, clip_min: float = DEFAULT_CLIP[0],
                  clip_max: float = DEFAULT_CLIP[1], return_details: bool = False):
    """Exact gradient of ``L_meta(phi'(theta))`` w.r.t. theta.

    ``grads`` are the per-example task gradients at ``phi`` and
    ``normalized_losses`` their z-scored losses (both constants w.r.t. theta).
    """
    pre = forward_weights(theta, normalized_losses, clip_min=clip_min, clip_max=clip_max)
    phi_prime = inner_step(phi, grads, pre, alpha)
    value, meta_grad = meta_loss_and_grad(phi_prime, meta_batch)
    d = grads @ meta_grad
    J = weight_jacobian(theta, normalized_losses, clip_min, clip_max)
    theta_grad = -alpha * (J.T @ d)
    if return_details:
        return theta_grad, pre, phi_prime, value
    return theta_grad


def meta_update(theta: WeightNetParams, theta_grad, beta: float) -> WeightNetParams:
    if not np.isfinite(beta) or beta <= 0:
        raise ConfigError(f"weight-net learning rate must be > 0, got {beta}")
    theta_grad = np.asarray(theta_grad, dtype=np.float64).reshape(-1)
    if theta_grad.size != theta.size:
        raise ShapeError(f"theta gradient has {theta_grad.size} entries, weight net has {theta.size}")
    return WeightNetParams(theta.flat - beta * theta_grad, theta.hidden_dim)


@dataclass
class BiLevelTrace:
    batch_ids: np.ndarray
    pre_weights: BatchWeights
    virtual_params: dm.TaskModelParams
    meta_loss_value: float
    theta_grad: np.ndarray
    post_weights: BatchWeights
    events: list[str] = field(default_factory=list)


@dataclass
class StepResult:
    phi: dm.TaskModelParams
    theta: WeightNetParams
    losses: np.ndarray
    trace: BiLevelTrace


def hamr_step(phi: dm.TaskModelParams, theta: WeightNetParams, batch: dm.Batch, meta_batch: dm.Batch,
              alpha: float, beta: float, inner_lr: float | None = None,
              aggregation=dm.Aggregation.MEAN_CE, clip_min: float = DEFAULT_CLIP[0],
              clip_max: float = DEFAULT_CLIP[1]) -> StepResult:
    """One pre-weights -> inner -> meta -> post-weights -> outer step.

    ``inner_lr`` is the virtual-step size (defaults to ``alpha``).
    ``trace.events`` records the order in which the stages ran.
    """
    inner_lr = alpha if inner_lr is None else inner_lr
    events = []
    losses, grads = dm.batch_gradients(phi, batch, aggregation)
    z = zscore_normalize(losses)

    theta_grad, pre, phi_prime, value = meta_gradient(phi, grads, z, theta, inner_lr, meta_batch,
                                                      clip_min, clip_max, return_details=True)
    pre = BatchWeights(pre.raw, pre.normalized, pre.normalized_clipped, batch.ids, "pre")
    events += ["pre_weights", "inner_step"]
    theta_new = meta_update(theta, theta_grad, beta)
    events.append("meta_step")
    post = forward_weights(theta_new, z, batch.ids, clip_min, clip_max, tag="post")
    events.append("post_weights")
    phi_new = outer_step(phi, grads, post, alpha)
    events.append("outer_step")
    trace = BiLevelTrace(batch.ids.copy(), pre, phi_prime, value, theta_grad, post, events)
    return StepResult(phi_new, theta_new, losses, trace)
