"""Evaluation: per-class / micro / macro F1, BIO span F1, imbalance ratio,
frequency-quartile breakdown and local label consistency."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Hashable, Sequence

import numpy as np

from .errors import ConfigError, DataError


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class F1Report:
    per_class: dict[Hashable, ClassScore]
    macro_f1: float
    micro_f1: float
    micro_precision: float = 0.0
    micro_recall: float = 0.0

    @property
    def support(self) -> dict[Hashable, int]:
        return {k: v.support for k, v in self.per_class.items()}

    def f1(self) -> dict[Hashable, float]:
        return {k: v.f1 for k, v in self.per_class.items()}

    def to_dict(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "micro_precision": self.micro_precision,
            "micro_recall": self.micro_recall,
            "per_class": {str(k): {"precision": v.precision, "recall": v.recall,
                                   "f1": v.f1, "support": v.support}
                          for k, v in self.per_class.items()},
        }


def _prf(tp: float, fp: float, fn: float) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def _report(tp: dict, fp: dict, fn: dict, labels: Sequence, exclude=()) -> F1Report:
    per_class = {}
    for c in labels:
        p, r, f = _prf(tp[c], fp[c], fn[c])
        per_class[c] = ClassScore(p, r, f, int(tp[c] + fn[c]))
    used = [c for c in labels if c not in exclude]
    macro = float(np.mean([per_class[c].f1 for c in used])) if used else 0.0
    mp, mr, mf = _prf(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    return F1Report(per_class, macro, mf, mp, mr)


def f1_scores(predictions, gold, num_classes: int, exclude_empty: bool = False) -> F1Report:
    """Per-class P/R/F1 over labels ``0..num_classes-1``.

    Classes absent from both gold and predictions score F1 = 0 and count toward
    the macro mean unless ``exclude_empty`` is set.
    """
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    gold = np.asarray(gold, dtype=np.int64).reshape(-1)
    if pred.shape != gold.shape:
        raise DataError(f"{pred.size} predictions for {gold.size} gold labels")
    for arr in (pred, gold):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise DataError(f"label outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (gold, pred), 1)
    tp = {c: int(cm[c, c]) for c in range(num_classes)}
    fp = {c: int(cm[:, c].sum() - cm[c, c]) for c in range(num_classes)}
    fn = {c: int(cm[c, :].sum() - cm[c, c]) for c in range(num_classes)}
    empty = {c for c in range(num_classes) if cm[c, :].sum() == 0 and cm[:, c].sum() == 0}
    return _report(tp, fp, fn, list(range(num_classes)), empty if exclude_empty else ())


_TAG = re.compile(r"^(?:O|([BI])-(.+))$")


def _as_sentences(tags) -> list[list[str]]:
    if isinstance(tags, str):
        return [tags.split()]
    tags = list(tags)
    # a flat list of single tags is one sentence; space-joined strings are sentences
    if all(isinstance(t, str) and " " not in t.strip() for t in tags):
        return [tags]
    return [t.split() if isinstance(t, str) else list(t) for t in tags]


def bio_spans(tags: Sequence[str]) -> list[tuple[int, int, str]]:
    """Entity spans ``(start, end_exclusive, type)``.

    A span is a B-X followed by I-X tokens. An I-X that does not continue an
    open X span starts a new span.
    """
    spans = []
    start, kind = None, None
    for i, tag in enumerate(list(tags) + ["O"]):
        m = _TAG.match(tag)
        if m is None:
            raise DataError(f"malformed BIO tag {tag!r} at position {i}")
        prefix, etype = m.groups()
        continues = prefix == "I" and kind == etype
        if start is not None and not continues:
            spans.append((start, i, kind))
            start, kind = None, None
        if prefix is not None and not continues:
            start, kind = i, etype
    return spans


def bio_span_f1(pred_tags, gold_tags) -> F1Report:
    """Exact-match entity span P/R/F1 per type; micro pools all spans; O is never scored."""
    pred_s, gold_s = _as_sentences(pred_tags), _as_sentences(gold_tags)
    if len(pred_s) != len(gold_s):
        raise DataError(f"{len(pred_s)} predicted sentences for {len(gold_s)} gold sentences")
    pred_spans, gold_spans = set(), set()
    for sid, (p, g) in enumerate(zip(pred_s, gold_s)):
        if len(p) != len(g):
            raise DataError(f"sentence {sid}: {len(p)} predicted tags for {len(g)} gold tags")
        pred_spans.update((sid,) + s for s in bio_spans(p))
        gold_spans.update((sid,) + s for s in bio_spans(g))
    types = sorted({s[3] for s in pred_spans | gold_spans})
    tp = {t: 0 for t in types}
    fp = dict(tp)
    fn = dict(tp)
    for s in pred_spans:
        (tp if s in gold_spans else fp)[s[3]] += 1
    for s in gold_spans - pred_spans:
        fn[s[3]] += 1
    return _report(tp, fp, fn, types)


def imbalance_ratio(class_counts, decimals: int | None = 1) -> float:
    """Largest over smallest class count, rounded to ``decimals`` (None = exact)."""
    counts = np.asarray(class_counts, dtype=np.float64).reshape(-1)
    if counts.size == 0 or np.any(counts < 1):
        raise DataError(f"class counts must all be >= 1, got {counts.tolist()}")
    ir = float(counts.max() / counts.min())
    return ir if decimals is None else round(ir, decimals)


@dataclass(frozen=True)
class QuartileReport:
    quartile_assignment: dict[Hashable, int]
    mean_f1: tuple[float | None, ...]
    members: tuple[tuple[Hashable, ...], ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "quartile_assignment": {str(k): f"Q{v}" for k, v in self.quartile_assignment.items()},
            "mean_f1": {f"Q{i + 1}": m for i, m in enumerate(self.mean_f1)},
            "members": {f"Q{i + 1}": [str(x) for x in g] for i, g in enumerate(self.members)},
        }


def quartile_sizes(n: int) -> list[int]:
    base, rem = divmod(n, 4)
    return [base + (1 if q < rem else 0) for q in range(4)]


def quartile_analysis(per_label_f1: dict, train_label_counts: dict) -> QuartileReport:
    """Sort labels by train count (ties by label) and cut into four contiguous
    groups, earlier groups taking the remainder. Q1 holds the rarest labels;
    empty groups report ``None``."""
    missing = set(per_label_f1) ^ set(train_label_counts)
    if missing:
        raise DataError(f"labels lacking either an F1 or a count: {sorted(map(str, missing))}")
    labels = sorted(per_label_f1, key=lambda c: (train_label_counts[c], c))
    assignment, members, means = {}, [], []
    pos = 0
    for q, size in enumerate(quartile_sizes(len(labels)), start=1):
        group = labels[pos:pos + size]
        pos += size
        for c in group:
            assignment[c] = q
        members.append(tuple(group))
        means.append(float(np.mean([per_label_f1[c] for c in group])) if group else None)
    return QuartileReport(assignment, tuple(means), tuple(members))


def _consistent(labels: np.ndarray, anchors: np.ndarray, neighbor_ids: np.ndarray) -> np.ndarray:
    same = (labels[neighbor_ids] == labels[anchors][:, None]).mean(axis=1)
    return same > 0.5


def local_consistency(index, labels, sample_set, K: int = 10) -> float:
    """Fraction of ``sample_set`` whose K nearest neighbours are > 50% same-label."""
    labels = np.asarray(labels)
    sample_set = np.unique(np.asarray(sample_set, dtype=np.int64))
    if sample_set.size == 0:
        raise ConfigError("consistency needs a non-empty sample set")
    nl = index.query(sample_set, K)
    return float(_consistent(labels, sample_set, nl.lists).mean())


def random_consistency(labels, K: int = 10, anchors=None, rng: np.random.Generator | None = None) -> float:
    """Same indicator, but the K comparison points are uniform draws (without
    replacement) from the rest of the set instead of nearest neighbours."""
    labels = np.asarray(labels)
    n = labels.size
    if not 1 <= K <= n - 1:
        raise ConfigError(f"K must lie in [1, {n - 1}], got {K}")
    rng = rng if rng is not None else np.random.default_rng(0)
    anchors = np.arange(n) if anchors is None else np.asarray(anchors, dtype=np.int64)
    draws = np.empty((anchors.size, K), dtype=np.int64)
    for r, a in enumerate(anchors):
        pick = rng.choice(n - 1, size=K, replace=False)
        draws[r] = pick + (pick >= a)
    return float(_consistent(labels, anchors, draws).mean())


def hard_with_neighbors(index, hard_ids, k: int) -> np.ndarray:
    hard_ids = np.asarray(hard_ids, dtype=np.int64)
    nl = index.query(hard_ids, k)
    return np.union1d(hard_ids, nl.lists.ravel())


def consistency_audit(index, labels, hard_ids, K: int = 10, expand_k: int | None = None,
                      rng: np.random.Generator | None = None) -> dict[str, float]:
    """The four settings: random comparisons, full set, hard set, hard set plus its neighbours."""
    labels = np.asarray(labels)
    expand_k = K if expand_k is None else expand_k
    return {
        "random": random_consistency(labels, K, rng=rng),
        "full_set": local_consistency(index, labels, np.arange(labels.size), K),
        "hard": local_consistency(index, labels, hard_ids, K),
        "hard_union_neighbors": local_consistency(index, labels, hard_with_neighbors(index, hard_ids, expand_k), K),
    }

