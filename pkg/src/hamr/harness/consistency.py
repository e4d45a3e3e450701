"""Local label-consistency audit of the hard set found by a short training run."""

from __future__ import annotations

import numpy as np

from ..hardness import HardnessState, select_hard_set
from ..metrics import consistency_audit
from ..neighbors import build_index
from ..sampler import make_rng
from .config import RunConfig
from .data import LabeledDataset
from .trainer import train

SETTINGS = ("random", "full_set", "hard", "hard_union_neighbors")
SETTING_NAMES = {"random": "Random", "full_set": "Full Set", "hard": "Hard Samples",
                 "hard_union_neighbors": "Hard + Neighbors"}


def run_consistency(cfg: RunConfig, ds: LabeledDataset) -> dict:
    """Train the meta method for ``audit_epoch`` epochs, take its hard set and
    audit the four settings over the train split's embeddings."""
    run_cfg = cfg.replace(method="hamr", epochs=cfg.audit_epoch, eval_every_epoch=False)
    art = train(run_cfg, ds)
    state = HardnessState.from_dict(art.hardness)
    hard = select_hard_set(state, cfg.knn_ratio)
    train_ids = ds.split_ids("train")
    labels = ds.example_labels()[train_ids]
    index = build_index(ds.embedding_matrix()[train_ids], cfg.metric,
                        approximate=cfg.approximate_index, seed=cfg.seed)
    rng = make_rng(np.random.SeedSequence(cfg.seed).spawn(6)[5])
    scores = consistency_audit(index, labels, hard, K=cfg.audit_k, expand_k=cfg.knn_k, rng=rng)
    return {"scores": scores, "hard_set_size": int(hard.size), "K": cfg.audit_k,
            "expand_k": cfg.knn_k, "audit_epoch": cfg.audit_epoch, "n_train": int(train_ids.size)}


def format_consistency(result: dict) -> str:
    lines = [f"setting,consistency  (K={result['K']}, hard set {result['hard_set_size']} "
             f"of {result['n_train']}, after {result['audit_epoch']} epochs)"]
    for key in SETTINGS:
        lines.append(f"{SETTING_NAMES[key]},{result['scores'][key]:.4f}")
    return "\n".join(lines)
