"""Run artifact: one JSON document per run.

Top-level keys (``schema_version`` 1):

    schema_version, status ("completed" | "diverged"), message,
    config            every RunConfig field
    dataset           kind, sizes, train label counts, imbalance ratio, content hash
    history           per epoch: epoch, train_loss, valid_macro_f1, valid_micro_f1
    final             valid/test reports: f1 (per class P/R/F1/support, macro, micro), quartiles
    model             num_classes, feature_dim, hidden_dim, flat parameter vector
    weight_net        hidden_dim and flat vector, or null for baselines
    hardness          h, b, hit_counts, last_refresh_epoch, or null for baselines
    boost_refreshes   epoch, hard_set_size, boosted count per refresh
    meta_set          example_ids and target_count, or null
    wall_clock_seconds
    trace             per-step stage order and weights when verbose_trace is on, else null

Floats are written with full precision so a reloaded artifact compares equal.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..diffmodel import TaskModelParams
from ..errors import DataError
from ..metrics import imbalance_ratio
from ..weightnet import WeightNetParams

SCHEMA_VERSION = 1


def dataset_fingerprint(ds) -> str:
    h = hashlib.sha256()
    for arr in (ds.x, ds.y, ds.offsets):
        h.update(np.ascontiguousarray(arr).tobytes())
    h.update("|".join(ds.split.tolist()).encode())
    if ds.embeddings is not None:
        h.update(np.ascontiguousarray(ds.embeddings).tobytes())
    return h.hexdigest()


def dataset_summary(ds) -> dict:
    counts = ds.label_counts("train")
    return {
        "kind": ds.kind, "n": ds.n, "feature_dim": ds.feature_dim, "num_classes": ds.num_classes,
        "split_sizes": {s: int(ds.split_ids(s).size) for s in ("train", "valid", "test")},
        "train_label_counts": counts.tolist(),
        "train_imbalance_ratio": imbalance_ratio(counts) if np.all(counts >= 1) else None,
        "sha256": dataset_fingerprint(ds),
    }


@dataclass
class RunArtifact:
    status: str
    config: dict
    dataset: dict
    history: list
    final: dict
    model: TaskModelParams
    weight_net: WeightNetParams | None = None
    hardness: dict | None = None
    boost_refreshes: list = field(default_factory=list)
    meta_set: dict | None = None
    wall_clock_seconds: float = 0.0
    trace: list | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "status": self.status,
            "message": self.message,
            "config": self.config,
            "dataset": self.dataset,
            "history": self.history,
            "final": self.final,
            "model": {"num_classes": self.model.num_classes, "feature_dim": self.model.feature_dim,
                      "hidden_dim": self.model.hidden_dim, "flat": self.model.flat.tolist()},
            "weight_net": None if self.weight_net is None else
            {"hidden_dim": self.weight_net.hidden_dim, "flat": self.weight_net.flat.tolist()},
            "hardness": self.hardness,
            "boost_refreshes": self.boost_refreshes,
            "meta_set": self.meta_set,
            "wall_clock_seconds": self.wall_clock_seconds,
            "trace": self.trace,
        }

    def comparable(self) -> dict:
        """Everything except wall-clock time; equal for replayed runs."""
        d = self.to_dict()
        d.pop("wall_clock_seconds")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunArtifact":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise DataError(f"unsupported artifact schema_version {d.get('schema_version')!r}")
        m = d["model"]
        model = TaskModelParams(np.asarray(m["flat"], float), m["num_classes"], m["feature_dim"],
                                m["hidden_dim"])
        wn = d.get("weight_net")
        theta = None if wn is None else WeightNetParams(np.asarray(wn["flat"], float), wn["hidden_dim"])
        return cls(d["status"], d["config"], d["dataset"], d["history"], d["final"], model, theta,
                   d.get("hardness"), d.get("boost_refreshes", []), d.get("meta_set"),
                   d.get("wall_clock_seconds", 0.0), d.get("trace"), d.get("message", ""))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, allow_nan=True) + "\n")

    @classmethod
    def load(cls, path) -> "RunArtifact":
        p = Path(path)
        if not p.is_file():
            raise DataError(f"artifact not found: {p}")
        try:
            return cls.from_dict(json.loads(p.read_text()))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{p}: malformed artifact ({exc})") from None
