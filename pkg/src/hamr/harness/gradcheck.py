"""Finite-difference checks of the model gradient and the weight-net meta-gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffmodel as dm
from ..metastep import inner_step, meta_gradient, meta_loss
from ..weightnet import WeightNetParams, forward_weights, zscore_normalize

FD_STEP = 1e-5
MODEL_TOL = 1e-4
META_TOL = 1e-3


@dataclass(frozen=True)
class GradcheckResult:
    name: str
    errors: list
    tolerance: float
    skipped: int = 0

    @property
    def passed(self) -> bool:
        return bool(self.errors) and max(self.errors) < self.tolerance

    def summary(self) -> str:
        worst = max(self.errors) if self.errors else float("nan")
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: {len(self.errors)} cases, max rel error {worst:.2e} "
                f"(tol {self.tolerance:g}), skipped {self.skipped} -> {verdict}")


def central_difference(f, x0, step=FD_STEP):
    grad = np.zeros_like(x0)
    for j in range(x0.size):
        e = np.zeros_like(x0)
        e[j] = step
        grad[j] = (f(x0 + e) - f(x0 - e)) / (2 * step)
    return grad


def relative_error(a, b) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def check_model_gradient(cases: int = 50, seed: int = 0) -> GradcheckResult:
    rng = np.random.default_rng(seed)
    errors = []
    for i in range(cases):
        C, d, T = int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
        hidden = int(rng.integers(0, 4))
        agg = ("mean", "max")[i % 2]
        params = dm.TaskModelParams.init(C, d, hidden, rng, scale=1.0)
        ex = dm.Example(rng.normal(size=(T, d)), rng.integers(0, C, size=T), i)
        g = dm.per_example_grad(params, ex, agg).flat_grad
        fd = central_difference(lambda f: dm.per_example_loss(params.with_flat(f), ex, agg).value,
                                params.flat.copy())
        errors.append(relative_error(g, fd))
    return GradcheckResult("model gradient", errors, MODEL_TOL)


def check_meta_gradient(cases: int = 25, seed: int = 0, hidden: int = 64,
                        alpha: float = 0.5) -> GradcheckResult:
    """Instances whose weights sit within reach of a clip bound are skipped:
    the clipped weight is not differentiable there."""
    rng = np.random.default_rng(seed)
    errors, skipped = [], 0
    while len(errors) < cases and skipped < 10 * cases:
        n, C, d = int(rng.integers(2, 9)), int(rng.integers(2, 5)), int(rng.integers(1, 4))
        phi = dm.TaskModelParams.init(C, d, 0, rng, scale=1.0)
        batch = dm.Batch.from_examples([dm.Example(rng.normal(size=d), rng.integers(0, C), j)
                                        for j in range(n)])
        meta = dm.Batch.from_examples([dm.Example(rng.normal(size=d), rng.integers(0, C), 100 + j)
                                       for j in range(6)])
        theta = WeightNetParams(rng.normal(0, 0.3, 3 * hidden + 1), hidden)
        losses, grads = dm.batch_gradients(phi, batch)
        z = zscore_normalize(losses)
        w = forward_weights(theta, z).normalized
        if np.any((w < 0.06) | (w > 9.5)):
            skipped += 1
            continue

        def objective(flat):
            weights = forward_weights(WeightNetParams(flat, hidden), z)
            return meta_loss(inner_step(phi, grads, weights, alpha), meta)

        g = meta_gradient(phi, grads, z, theta, alpha, meta)
        errors.append(relative_error(g, central_difference(objective, theta.flat.copy())))
    return GradcheckResult("meta gradient", errors, META_TOL, skipped)
