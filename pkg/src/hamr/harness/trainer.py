"""Training loop for the meta-reweighted, hardness-resampled method and the
comparison objectives.

Per epoch of the ``hamr`` method:
  refresh neighbourhood boosts (every ``refresh_interval`` epochs), then for
  each of ceil(n_train / batch_size) steps: sampling probabilities -> batch ->
  pre-weights -> virtual step -> weight-net step -> post-weights -> model step
  -> EMA of hardness.

Baselines draw uniform batches from the same sampling stream and take one
plain gradient step on their objective. The weight net is never built for them.
"""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from .. import diffmodel as dm
from ..baselines import dice_logit_grad, dice_loss, en_weights, focal_alpha, focal_logit_grad, focal_loss, \
    icf_weights, onehot
from ..errors import ConfigError, DivergenceError
from ..hardness import ema_update, init_hardness, select_hard_set
from ..metastep import build_meta_set, hamr_step
from ..neighbors import build_index, compute_boosts, knn_query
from ..sampler import draw_batch, make_rng, sampling_probabilities, uniform_distribution
from ..weightnet import WeightNetParams
from .artifact import RunArtifact, dataset_summary
from .config import RunConfig
from .data import LabeledDataset, load_dataset
from .evaluate import evaluate_params

log = logging.getLogger(__name__)

# independent generator streams so that changing one consumer never shifts another
STREAMS = ("model", "weight_net", "meta_set", "sampling", "meta_batch")


def rng_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: make_rng(child) for name, child in zip(STREAMS, children)}


def class_weights_for(cfg: RunConfig, counts: np.ndarray) -> np.ndarray | None:
    if cfg.method == "icf":
        return icf_weights(counts).w
    if cfg.method == "en":
        return en_weights(counts, cfg.en_beta, normalize=cfg.en_normalize).w
    if cfg.method == "focal":
        return focal_alpha(counts, cfg.en_beta)
    return None


def baseline_objective(phi: dm.TaskModelParams, batch: dm.Batch, cfg: RunConfig,
                       class_w: np.ndarray | None):
    """Summed batch objective and its gradient for the non-meta methods."""
    agg = dm.Aggregation.parse(cfg.loss_agg)
    token_losses, probs = dm.token_cross_entropy(phi, batch.x, batch.y)
    if cfg.method == "dice":
        # dice is a batch-level mean over classes; scale by batch size to match the summed objectives
        target = onehot(batch.y, phi.num_classes)
        value = batch.size * dice_loss(probs, target, cfg.dice_eps)
        dlogits = batch.size * dice_logit_grad(probs, target, cfg.dice_eps)
        return value, dm.summed_gradient(phi, batch.x, dlogits)
    if cfg.method == "focal":
        per_token = focal_loss(probs, batch.y, cfg.focal_gamma, class_w)
        values, coef = dm.aggregate(per_token, batch.seg, batch.size, agg)
        dlogits = focal_logit_grad(probs, batch.y, cfg.focal_gamma, class_w) * coef[:, None]
        return float(values.sum()), dm.summed_gradient(phi, batch.x, dlogits)
    token_w = np.ones(batch.y.size) if class_w is None else class_w[batch.y]
    values, coef = dm.aggregate(token_losses * token_w, batch.seg, batch.size, agg)
    residual = probs.copy()
    residual[np.arange(batch.y.size), batch.y] -= 1.0
    dlogits = residual * (coef * token_w)[:, None]
    return float(values.sum()), dm.summed_gradient(phi, batch.x, dlogits)


class _Run:
    """Mutable state of one training run."""

    def __init__(self, cfg: RunConfig, ds: LabeledDataset):
        self.cfg = cfg
        self.ds = ds
        self.rngs = rng_streams(cfg.seed)
        self.train_ids = ds.split_ids("train")
        self.valid_ids = ds.split_ids("valid")
        self.n_train = self.train_ids.size
        self.phi = dm.TaskModelParams.init(ds.num_classes, ds.feature_dim, cfg.hidden_dim,
                                           self.rngs["model"], scale=cfg.init_scale)
        self.theta = None
        self.state = None
        self.index = None
        self.meta = None
        self.history = []
        self.trace = []
        self.refreshes = []
        if cfg.method == "hamr":
            self._setup_meta()
        else:
            self.class_w = class_weights_for(cfg, ds.token_counts("train"))

    def _setup_meta(self):
        cfg, ds = self.cfg, self.ds
        self.theta = WeightNetParams.init(cfg.wnet_hidden, self.rngs["weight_net"])
        self.state = init_hardness(self.n_train)
        self.example_classes = ds.example_labels()
        self._build_meta_set()
        if cfg.knn_lambda > 0 and cfg.epochs > cfg.refresh_interval:
            if cfg.knn_k > self.n_train - 1:
                raise ConfigError(f"knn_k = {cfg.knn_k} needs at least {cfg.knn_k + 1} train examples")
            emb = ds.embedding_matrix()[self.train_ids]
            self.index = build_index(emb, cfg.metric, approximate=cfg.approximate_index, seed=cfg.seed)

    def _build_meta_set(self):
        self.meta = build_meta_set(self.example_classes, self.train_ids, self.valid_ids,
                                   self.ds.num_classes, self.rngs["meta_set"])
        self.meta_batch_full = self.ds.batch(self.meta.example_ids)

    def meta_batch(self) -> dm.Batch:
        m = self.cfg.meta_batch_size
        if not m or m >= len(self.meta):
            return self.meta_batch_full
        pick = self.rngs["meta_batch"].choice(len(self.meta), size=m, replace=False)
        return self.ds.batch(self.meta.example_ids[np.sort(pick)])

    def refresh_boosts(self, epoch: int):
        cfg = self.cfg
        hard = select_hard_set(self.state, cfg.knn_ratio)
        if self.index is None:
            b, hits = np.zeros(self.n_train), np.zeros(self.n_train, dtype=np.int64)
        else:
            b, hits = compute_boosts(hard, knn_query(self.index, hard, cfg.knn_k), self.n_train)
        self.state = self.state.with_boosts(b, hits, epoch)
        self.refreshes.append({"epoch": epoch, "hard_set_size": int(hard.size),
                               "boosted": int(np.count_nonzero(b))})

    def check_finite(self, epoch: int, step: int, losses):
        if np.all(np.isfinite(losses)) and self.phi.is_finite() and \
                (self.theta is None or np.all(np.isfinite(self.theta.flat))):
            return
        msg = f"non-finite loss or parameters at epoch {epoch}, step {step}"
        art = self.artifact(status="diverged", message=msg)
        raise DivergenceError(msg, artifact=art)

    def epoch(self, epoch: int):
        cfg = self.cfg
        steps = math.ceil(self.n_train / cfg.batch_size)
        agg = dm.Aggregation.parse(cfg.loss_agg)
        if cfg.method == "hamr":
            if epoch > 0 and epoch % cfg.refresh_interval == 0:
                self.refresh_boosts(epoch)
            if cfg.rebuild_meta_set and epoch > 0:
                self._build_meta_set()
        total, count = 0.0, 0
        for step in range(steps):
            if cfg.method == "hamr":
                dist = sampling_probabilities(self.state.h, self.state.b, cfg.hardness_alpha,
                                              cfg.knn_lambda, cfg.epsilon)
            else:
                dist = uniform_distribution(self.n_train)
            local = draw_batch(dist, cfg.batch_size, self.rngs["sampling"])
            batch = self.ds.batch(self.train_ids[local], batch_ids=local)
            if cfg.method == "hamr":
                res = hamr_step(self.phi, self.theta, batch, self.meta_batch(), cfg.learning_rate,
                                cfg.wnet_lr, cfg.inner_lr, agg, cfg.clip_min, cfg.clip_max)
                self.phi, self.theta = res.phi, res.theta
                self.check_finite(epoch, step, res.losses)
                self.state = ema_update(self.state, local, res.trace.post_weights.values, cfg.gamma_ema)
                total += float(res.losses.sum())
                if cfg.verbose_trace:
                    self.trace.append(_trace_record(epoch, step, res.trace))
            else:
                value, grad = baseline_objective(self.phi, batch, cfg, self.class_w)
                self.phi = dm.apply_step(self.phi, grad, cfg.learning_rate)
                self.check_finite(epoch, step, [value])
                total += value
            count += batch.size
        record = {"epoch": epoch, "train_loss": total / max(count, 1)}
        if cfg.eval_every_epoch:
            report = evaluate_params(self.phi, self.ds, "valid")
            record["valid_macro_f1"] = report.f1.macro_f1
            record["valid_micro_f1"] = report.f1.micro_f1
        self.history.append(record)
        log.info("epoch %d: %s", epoch, record)

    def artifact(self, status="completed", message="", seconds=0.0) -> RunArtifact:
        final = {}
        if status == "completed":
            for split in ("valid", "test"):
                final[split] = evaluate_params(self.phi, self.ds, split).to_dict()
        meta = None
        if self.meta is not None:
            meta = {"example_ids": self.meta.example_ids.tolist(), "target_count": self.meta.target_count}
        return RunArtifact(
            status=status, message=message, config=self.cfg.to_dict(),
            dataset=dataset_summary(self.ds), history=list(self.history), final=final,
            model=self.phi, weight_net=self.theta,
            hardness=None if self.state is None else self.state.to_dict(),
            boost_refreshes=list(self.refreshes), meta_set=meta,
            wall_clock_seconds=seconds, trace=list(self.trace) if self.cfg.verbose_trace else None)


def _trace_record(epoch, step, trace) -> dict:
    return {
        "epoch": epoch, "step": step, "events": list(trace.events),
        "batch_ids": trace.batch_ids.tolist(),
        "pre_weights": trace.pre_weights.values.tolist(),
        "post_weights": trace.post_weights.values.tolist(),
        "meta_loss": trace.meta_loss_value,
    }


def train(cfg: RunConfig, dataset: LabeledDataset | None = None) -> RunArtifact:
    if dataset is None:
        if not cfg.data:
            raise ConfigError("no dataset given (set data=<path>)")
        dataset = load_dataset(cfg.data, cfg.embeddings or None)
    start = time.perf_counter()
    run = _Run(cfg, dataset)
    for epoch in range(cfg.epochs):
        run.epoch(epoch)
    return run.artifact(seconds=time.perf_counter() - start)
