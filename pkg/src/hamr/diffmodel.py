"""Small differentiable task model: softmax regression with an optional tanh
hidden layer.

Parameters live in one flat vector plus a shape manifest, so every gradient
is a flat vector too and inner products between gradients are plain dots.
Flat layout: ``[W, b]`` for the linear model, ``[V, c, W, b]`` with a hidden
layer (``V``: hidden x features, ``W``: classes x hidden).

An *example* is a group of one or more feature rows (tokens) with one label
per row. Classification examples are one-row groups.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError, ShapeError


class Aggregation(str, Enum):
    """How token losses of one example collapse into its example loss."""

    MEAN_CE = "mean"
    MAX_TOKEN = "max"

    @classmethod
    def parse(cls, value: "Aggregation | str") -> "Aggregation":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"mean": cls.MEAN_CE, "mean_ce": cls.MEAN_CE, "ce": cls.MEAN_CE,
                   "max": cls.MAX_TOKEN, "max_token": cls.MAX_TOKEN}
        if key not in aliases:
            raise ConfigError(f"unknown loss aggregation {value!r} (expected mean or max)")
        return aliases[key]


@dataclass(frozen=True)
class TaskModelParams:
    flat: np.ndarray
    num_classes: int
    feature_dim: int
    hidden_dim: int = 0

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64).reshape(-1)
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)
        if self.num_classes < 1 or self.feature_dim < 1 or self.hidden_dim < 0:
            raise ShapeError("num_classes and feature_dim must be >= 1, hidden_dim >= 0")
        expected = sum(int(np.prod(s)) for _, s in self.manifest)
        if flat.size != expected:
            raise ShapeError(f"flat parameter vector has {flat.size} entries, manifest needs {expected}")

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat)))

    @property
    def manifest(self) -> list[tuple[str, tuple[int, ...]]]:
        C, d, H = self.num_classes, self.feature_dim, self.hidden_dim
        if H:
            return [("V", (H, d)), ("c", (H,)), ("W", (C, H)), ("b", (C,))]
        return [("W", (C, d)), ("b", (C,))]

    @property
    def size(self) -> int:
        return self.flat.size

    def arrays(self) -> dict[str, np.ndarray]:
        out, pos = {}, 0
        for name, shape in self.manifest:
            n = int(np.prod(shape))
            out[name] = self.flat[pos:pos + n].reshape(shape)
            pos += n
        return out

    @property
    def weights(self) -> np.ndarray:
        return self.arrays()["W"]

    @property
    def bias(self) -> np.ndarray:
        return self.arrays()["b"]

    def with_flat(self, flat: np.ndarray) -> "TaskModelParams":
        return TaskModelParams(flat, self.num_classes, self.feature_dim, self.hidden_dim)

    @classmethod
    def from_arrays(cls, weights, bias, hidden_weights=None, hidden_bias=None) -> "TaskModelParams":
        weights = np.atleast_2d(np.asarray(weights, dtype=np.float64))
        bias = np.asarray(bias, dtype=np.float64).reshape(-1)
        if hidden_weights is None:
            return cls(np.concatenate([weights.ravel(), bias]), weights.shape[0], weights.shape[1])
        hidden_weights = np.atleast_2d(np.asarray(hidden_weights, dtype=np.float64))
        if hidden_bias is None:
            hidden_bias = np.zeros(hidden_weights.shape[0])
        flat = np.concatenate([hidden_weights.ravel(), np.asarray(hidden_bias, float).ravel(),
                               weights.ravel(), bias])
        return cls(flat, weights.shape[0], hidden_weights.shape[1], hidden_weights.shape[0])

    @classmethod
    def init(cls, num_classes: int, feature_dim: int, hidden_dim: int = 0,
             rng: np.random.Generator | None = None, scale: float = 0.01) -> "TaskModelParams":
        """Biases zero; weight matrices N(0, scale^2) (Xavier-scaled for the hidden layer)."""
        rng = rng if rng is not None else np.random.default_rng(0)
        C, d, H = num_classes, feature_dim, hidden_dim
        if not H:
            W = rng.normal(0.0, scale, size=(C, d))
            return cls.from_arrays(W, np.zeros(C))
        V = rng.normal(0.0, np.sqrt(1.0 / d), size=(H, d))
        W = rng.normal(0.0, np.sqrt(1.0 / H), size=(C, H))
        return cls.from_arrays(W, np.zeros(C), V, np.zeros(H))


@dataclass(frozen=True)
class Example:
    """A group of feature rows ``x`` (T x d) with per-row labels ``y`` (T,)."""

    x: np.ndarray
    y: np.ndarray
    example_id: int = -1

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
        y = np.atleast_1d(np.asarray(self.y)).astype(np.int64)
        if x.shape[0] == 0:
            raise DataError(f"example {self.example_id}: empty token group")
        if x.ndim != 2 or y.shape != (x.shape[0],):
            raise ShapeError(f"example {self.example_id}: {x.shape[0]} rows but labels shaped {y.shape}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)


@dataclass(frozen=True)
class Batch:
    """Concatenated token rows of several examples.

    ``seg[n]`` is the position (0..size-1) of the example owning row ``n``;
    ``ids`` are the dataset ids of the examples in batch order (repeats allowed).
    """

    x: np.ndarray
    y: np.ndarray
    seg: np.ndarray
    ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def size(self) -> int:
        return int(self.ids.size)

    @classmethod
    def from_examples(cls, examples: Sequence[Example]) -> "Batch":
        if not examples:
            raise DataError("empty batch")
        x = np.concatenate([e.x for e in examples])
        y = np.concatenate([e.y for e in examples])
        seg = np.concatenate([np.full(e.x.shape[0], i, dtype=np.int64) for i, e in enumerate(examples)])
        ids = np.array([e.example_id for e in examples], dtype=np.int64)
        return cls(x, y, seg, ids)


@dataclass(frozen=True)
class ExampleLoss:
    example_id: int
    value: float
    sub_losses: tuple[float, ...] | None = None


@dataclass(frozen=True)
class PerExampleGradient:
    example_id: int
    flat_grad: np.ndarray


def _check_rows(params: TaskModelParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.feature_dim:
        raise ShapeError(f"feature vector has length {x.shape[-1]}, model expects {params.feature_dim}")
    return x


def _forward(params: TaskModelParams, x: np.ndarray):
    a = params.arrays()
    if params.hidden_dim:
        hidden = np.tanh(x @ a["V"].T + a["c"])
        return hidden @ a["W"].T + a["b"], hidden
    return x @ a["W"].T + a["b"], None


def forward_logits(params: TaskModelParams, x) -> np.ndarray:
    """Logits for one feature vector (d,) or a stack of rows (N, d)."""
    x = _check_rows(params, x)
    logits, _ = _forward(params, np.atleast_2d(x))
    return logits[0] if x.ndim == 1 else logits


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _check_labels(params: TaskModelParams, y: np.ndarray) -> None:
    if y.size and (y.min() < 0 or y.max() >= params.num_classes):
        raise DataError(f"label outside [0, {params.num_classes})")


def token_cross_entropy(params: TaskModelParams, x, y):
    """Per-row cross-entropy and softmax probabilities."""
    x = _check_rows(params, np.atleast_2d(x))
    y = np.asarray(y, dtype=np.int64)
    _check_labels(params, y)
    logits, _ = _forward(params, x)
    shifted = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    losses = lse - shifted[np.arange(y.size), y]
    probs = np.exp(shifted - lse[:, None])
    return losses, probs


def aggregate(token_losses: np.ndarray, seg: np.ndarray, n_examples: int,
              aggregation: Aggregation | str):
    """Collapse token losses into example losses.

    Returns ``(values, coef)`` where ``coef[n]`` is d(example loss)/d(token loss n):
    ``1/T`` under MEAN_CE, one-hot on the first maximal token under MAX_TOKEN.
    """
    aggregation = Aggregation.parse(aggregation)
    counts = np.bincount(seg, minlength=n_examples)
    if np.any(counts == 0):
        raise DataError("empty token group in batch")
    if aggregation is Aggregation.MEAN_CE:
        values = np.bincount(seg, weights=token_losses, minlength=n_examples) / counts
        return values, 1.0 / counts[seg]
    values = np.full(n_examples, -np.inf)
    np.maximum.at(values, seg, token_losses)
    # first row (in order) attaining its group's maximum
    is_max = token_losses == values[seg]
    coef = np.zeros(token_losses.size)
    seen = np.zeros(n_examples, dtype=bool)
    for n in np.flatnonzero(is_max):
        if not seen[seg[n]]:
            seen[seg[n]] = True
            coef[n] = 1.0
    return values, coef


def row_gradients(params: TaskModelParams, x: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
    """Per-row parameter gradients (N, P) given dL/dlogits for each row."""
    x = np.atleast_2d(x)
    _, hidden = _forward(params, x)
    ones = np.ones((x.shape[0], 1))
    if not params.hidden_dim:
        xt = np.hstack([x, ones])
        g = dlogits[:, :, None] * xt[:, None, :]
        return np.hstack([g[:, :, :-1].reshape(x.shape[0], -1), g[:, :, -1]])
    a = params.arrays()
    dW = (dlogits[:, :, None] * hidden[:, None, :]).reshape(x.shape[0], -1)
    dz = (dlogits @ a["W"]) * (1.0 - hidden ** 2)
    dV = (dz[:, :, None] * x[:, None, :]).reshape(x.shape[0], -1)
    return np.hstack([dV, dz, dW, dlogits])


def summed_gradient(params: TaskModelParams, x: np.ndarray, dlogits: np.ndarray) -> np.ndarray:
    """Sum of the per-row gradients, without materialising them."""
    x = np.atleast_2d(x)
    _, hidden = _forward(params, x)
    if not params.hidden_dim:
        return np.concatenate([(dlogits.T @ x).ravel(), dlogits.sum(axis=0)])
    a = params.arrays()
    dz = (dlogits @ a["W"]) * (1.0 - hidden ** 2)
    return np.concatenate([(dz.T @ x).ravel(), dz.sum(axis=0),
                           (dlogits.T @ hidden).ravel(), dlogits.sum(axis=0)])


def _residual(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    r = probs.copy()
    r[np.arange(y.size), y] -= 1.0
    return r


def batch_losses(params: TaskModelParams, batch: Batch, aggregation=Aggregation.MEAN_CE) -> np.ndarray:
    token_losses, _ = token_cross_entropy(params, batch.x, batch.y)
    values, _ = aggregate(token_losses, batch.seg, batch.size, aggregation)
    return values


def batch_gradients(params: TaskModelParams, batch: Batch, aggregation=Aggregation.MEAN_CE):
    """Example losses (B,) and per-example gradients (B, P)."""
    token_losses, probs = token_cross_entropy(params, batch.x, batch.y)
    values, coef = aggregate(token_losses, batch.seg, batch.size, aggregation)
    rows = row_gradients(params, batch.x, _residual(probs, batch.y) * coef[:, None])
    grads = np.zeros((batch.size, params.size))
    np.add.at(grads, batch.seg, rows)
    return values, grads


def mean_loss_and_gradient(params: TaskModelParams, batch: Batch, aggregation=Aggregation.MEAN_CE):
    """Unweighted mean example loss over the batch and its gradient."""
    token_losses, probs = token_cross_entropy(params, batch.x, batch.y)
    values, coef = aggregate(token_losses, batch.seg, batch.size, aggregation)
    dlogits = _residual(probs, batch.y) * (coef / batch.size)[:, None]
    return float(values.mean()), summed_gradient(params, batch.x, dlogits)


def per_example_loss(params: TaskModelParams, example: Example,
                     aggregation: Aggregation | str = Aggregation.MEAN_CE) -> ExampleLoss:
    token_losses, _ = token_cross_entropy(params, example.x, example.y)
    seg = np.zeros(token_losses.size, dtype=np.int64)
    values, _ = aggregate(token_losses, seg, 1, aggregation)
    subs = tuple(float(v) for v in token_losses) if token_losses.size > 1 else None
    return ExampleLoss(example.example_id, float(values[0]), subs)


def per_example_grad(params: TaskModelParams, example: Example,
                     aggregation: Aggregation | str = Aggregation.MEAN_CE) -> PerExampleGradient:
    batch = Batch(example.x, example.y, np.zeros(example.y.size, dtype=np.int64),
                  np.array([example.example_id]))
    _, grads = batch_gradients(params, batch, aggregation)
    return PerExampleGradient(example.example_id, grads[0])


def apply_step(params: TaskModelParams, direction, lr: float) -> TaskModelParams:
    """``params - lr * direction`` as a new parameter object.

    ``lr = 0`` is accepted as an explicit no-op; negative rates are rejected.
    """
    if not np.isfinite(lr) or lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}")
    direction = np.asarray(direction, dtype=np.float64).reshape(-1)
    if direction.size != params.size:
        raise ShapeError(f"direction has {direction.size} entries, model has {params.size}")
    return params.with_flat(params.flat - lr * direction)
