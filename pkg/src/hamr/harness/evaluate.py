"""Split-level evaluation of a trained task model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffmodel as dm
from ..metrics import F1Report, QuartileReport, bio_span_f1, f1_scores, quartile_analysis
from .data import LabeledDataset, tag_name


@dataclass(frozen=True)
class EvalReport:
    split: str
    f1: F1Report
    quartiles: QuartileReport
    token_f1: F1Report | None = None

    def to_dict(self) -> dict:
        out = {"split": self.split, "f1": self.f1.to_dict(), "quartiles": self.quartiles.to_dict()}
        if self.token_f1 is not None:
            out["token_f1"] = self.token_f1.to_dict()
        return out


def predict_tokens(params: dm.TaskModelParams, ds: LabeledDataset, ids) -> tuple[np.ndarray, np.ndarray]:
    rows, _ = ds.token_rows(ids)
    logits = dm.forward_logits(params, ds.x[rows])
    return np.argmax(logits, axis=1), rows


def evaluate_params(params: dm.TaskModelParams, ds: LabeledDataset, split: str) -> EvalReport:
    ids = ds.split_ids(split)
    pred, rows = predict_tokens(params, ds, ids)
    gold = ds.y[rows]
    train_counts = ds.label_counts("train")
    if not ds.is_sequence:
        report = f1_scores(pred, gold, ds.num_classes)
        per_label = {c: report.per_class[c].f1 for c in range(ds.num_classes)}
        quart = quartile_analysis(per_label, {c: int(train_counts[c]) for c in range(ds.num_classes)})
        return EvalReport(split, report, quart)
    token_report = f1_scores(pred, gold, ds.num_classes)
    lengths = ds.lengths()[ids]
    cuts = np.cumsum(lengths)[:-1]
    pred_tags = [[tag_name(int(t)) for t in s] for s in np.split(pred, cuts)]
    gold_tags = [[tag_name(int(t)) for t in s] for s in np.split(gold, cuts)]
    span = bio_span_f1(pred_tags, gold_tags)
    types = [f"E{k}" for k in range(1, ds.num_entity_types + 1)]
    per_label = {t: (span.per_class[t].f1 if t in span.per_class else 0.0) for t in types}
    quart = quartile_analysis(per_label, {t: int(train_counts[k]) for k, t in enumerate(types)})
    return EvalReport(split, span, quart, token_report)


def evaluate(artifact_or_params, ds: LabeledDataset, split: str = "test") -> EvalReport:
    params = getattr(artifact_or_params, "model", artifact_or_params)
    return evaluate_params(params, ds, split)
