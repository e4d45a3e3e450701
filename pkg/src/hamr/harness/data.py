"""Line-oriented dataset files and the in-memory dataset.

Dataset file::

    CLS n d c                    SEQ n d c
    split,label,f1,...,fd        split,group_id,label,f1,...,fd

``n`` counts data rows. In SEQ files a group (one sentence) is a run of rows
sharing ``group_id``; groups keep the order of their first row. Label 0 is the
outside tag ``O``; label ``2k-1`` is ``B-E{k}`` and ``2k`` is ``I-E{k}``.

Embedding sidecar::

    EMB n e
    v1,...,ve                    one row per example (per group for SEQ)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..diffmodel import Batch, Example
from ..errors import ConfigError, DataError

SPLITS = ("train", "valid", "test")
KINDS = ("CLS", "SEQ")


def tag_name(label: int) -> str:
    if label == 0:
        return "O"
    return f"{'B' if label % 2 else 'I'}-E{(label + 1) // 2}"


def entity_type(label: int) -> int:
    """Entity type index (1-based) of a tag label; 0 for O."""
    return (label + 1) // 2


@dataclass(frozen=True)
class LabeledDataset:
    kind: str
    x: np.ndarray
    y: np.ndarray
    offsets: np.ndarray
    split: np.ndarray
    num_classes: int
    group_ids: np.ndarray
    embeddings: np.ndarray | None = None

    def __post_init__(self):
        for arr in (self.x, self.y, self.offsets, self.split, self.group_ids):
            arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.split.size

    @property
    def feature_dim(self) -> int:
        return self.x.shape[1]

    @property
    def is_sequence(self) -> bool:
        return self.kind == "SEQ"

    @property
    def num_entity_types(self) -> int:
        return (self.num_classes - 1) // 2

    def lengths(self) -> np.ndarray:
        return np.diff(self.offsets)

    def split_ids(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise ConfigError(f"unknown split {name!r} (expected one of {', '.join(SPLITS)})")
        return np.flatnonzero(self.split == name)

    def example(self, i: int) -> Example:
        a, b = self.offsets[i], self.offsets[i + 1]
        return Example(self.x[a:b], self.y[a:b], int(i))

    def token_rows(self, ids) -> tuple[np.ndarray, np.ndarray]:
        """Row indices of the given examples' tokens and the batch position of each row."""
        ids = np.asarray(ids, dtype=np.int64)
        lengths = self.offsets[ids + 1] - self.offsets[ids]
        seg = np.repeat(np.arange(ids.size), lengths)
        first = np.repeat(self.offsets[ids], lengths)
        within = np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        return first + within, seg

    def batch(self, ids, batch_ids=None) -> Batch:
        rows, seg = self.token_rows(ids)
        tags = np.asarray(ids if batch_ids is None else batch_ids, dtype=np.int64)
        return Batch(self.x[rows], self.y[rows], seg, tags)

    def example_labels(self) -> np.ndarray:
        """One class per example. CLS: its label. SEQ: its rarest train tag
        (by train token count), or O when the sentence has no entity."""
        if not self.is_sequence:
            return self.y.copy()
        counts = self.token_counts("train").astype(float)
        counts[counts == 0] = np.inf
        out = np.zeros(self.n, dtype=np.int64)
        for i in range(self.n):
            tags = np.unique(self.y[self.offsets[i]:self.offsets[i + 1]])
            ents = tags[tags > 0]
            if ents.size:
                out[i] = ents[np.argmin(counts[ents])]
        return out

    def token_counts(self, split: str | None = None) -> np.ndarray:
        ids = np.arange(self.n) if split is None else self.split_ids(split)
        rows, _ = self.token_rows(ids)
        return np.bincount(self.y[rows], minlength=self.num_classes)

    def label_counts(self, split: str | None = None) -> np.ndarray:
        """Class counts in the sense used by imbalance and quartile reports:
        examples per class for CLS, entity spans per type for SEQ."""
        ids = np.arange(self.n) if split is None else self.split_ids(split)
        if not self.is_sequence:
            return np.bincount(self.y[ids], minlength=self.num_classes)
        from ..metrics import bio_spans

        counts = np.zeros(self.num_entity_types, dtype=np.int64)
        for i in ids:
            for _, _, etype in bio_spans(self.tags(i)):
                counts[int(etype[1:]) - 1] += 1
        return counts

    def tags(self, i: int) -> list[str]:
        return [tag_name(int(t)) for t in self.y[self.offsets[i]:self.offsets[i + 1]]]

    def embedding_matrix(self) -> np.ndarray:
        """Sidecar embeddings when present; otherwise raw features (token mean for SEQ)."""
        if self.embeddings is not None:
            return self.embeddings
        if not self.is_sequence:
            return self.x
        sums = np.add.reduceat(self.x, self.offsets[:-1], axis=0)
        return sums / self.lengths()[:, None]

    def with_embeddings(self, emb) -> "LabeledDataset":
        emb = np.asarray(emb, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[0] != self.n:
            raise DataError(f"embeddings have shape {emb.shape}, expected ({self.n}, e)")
        return LabeledDataset(self.kind, self.x, self.y, self.offsets, self.split,
                              self.num_classes, self.group_ids, emb)


def build_dataset(kind: str, x, y, split, num_classes: int, group_ids=None, source: str = "<memory>"
                  ) -> LabeledDataset:
    """Assemble and validate a dataset from row arrays (one row per token)."""
    if kind not in KINDS:
        raise DataError(f"{source}: unknown dataset kind {kind!r}")
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    split = np.asarray(split, dtype=object)
    if x.ndim != 2 or y.shape != (x.shape[0],) or split.shape != y.shape:
        raise DataError(f"{source}: inconsistent row arrays {x.shape}, {y.shape}, {split.shape}")
    if kind == "CLS":
        offsets = np.arange(y.size + 1)
        ex_split = split
        groups = np.arange(y.size)
    else:
        if group_ids is None:
            raise DataError(f"{source}: SEQ data needs group ids")
        group_ids = np.asarray(group_ids)
        order = {}
        for g in group_ids.tolist():
            order.setdefault(g, len(order))
        rank = np.array([order[g] for g in group_ids.tolist()], dtype=np.int64)
        perm = np.argsort(rank, kind="stable")
        x, y, split, rank = x[perm], y[perm], split[perm], rank[perm]
        offsets = np.concatenate([[0], np.cumsum(np.bincount(rank, minlength=len(order)))])
        ex_split = split[offsets[:-1]]
        for i in range(len(order)):
            if np.any(split[offsets[i]:offsets[i + 1]] != ex_split[i]):
                raise DataError(f"{source}: group {list(order)[i]!r} spans more than one split")
        groups = np.array(list(order), dtype=object)
    ds = LabeledDataset(kind, x, y, offsets, np.asarray(ex_split, dtype="<U5"), int(num_classes),
                        groups)
    _check(ds, source)
    return ds


def _check(ds: LabeledDataset, source: str) -> None:
    if not np.all(np.isfinite(ds.x)):
        raise DataError(f"{source}: non-finite feature values")
    if ds.y.size and (ds.y.min() < 0 or ds.y.max() >= ds.num_classes):
        raise DataError(f"{source}: label outside [0, {ds.num_classes})")
    if ds.is_sequence and ds.num_classes % 2 == 0:
        raise DataError(f"{source}: SEQ tag count must be odd (O plus B/I per type), got {ds.num_classes}")
    for name in SPLITS:
        if not np.any(ds.split == name):
            raise DataError(f"{source}: split {name!r} is empty")
    present = ds.token_counts("train")
    missing = np.flatnonzero(present == 0)
    if missing.size:
        raise DataError(f"{source}: classes absent from the train split: {missing.tolist()}")


def _fail(source, lineno, msg):
    raise DataError(f"{source}:{lineno}: {msg}")


def _header(line: str, source: str, expect: tuple[str, ...]) -> tuple[str, list[int]]:
    parts = line.split()
    if len(parts) not in (3, 4) or parts[0] not in expect:
        _fail(source, 1, f"bad header {line.strip()!r}")
    try:
        nums = [int(p) for p in parts[1:]]
    except ValueError:
        _fail(source, 1, f"bad header {line.strip()!r}")
    if any(v < 1 for v in nums):
        _fail(source, 1, f"header sizes must be positive: {line.strip()!r}")
    return parts[0], nums


def _floats(fields, source, lineno):
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        _fail(source, lineno, "non-numeric feature value")
    if not all(np.isfinite(vals)):
        _fail(source, lineno, "non-finite feature value")
    return vals


def load_dataset(path, embeddings_path=None) -> LabeledDataset:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset file not found: {path}")
    source = str(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise DataError(f"{source}: empty file")
    kind, nums = _header(lines[0], source, KINDS)
    if len(nums) != 3:
        _fail(source, 1, f"header must be '{kind} n d c'")
    n, d, c = nums
    rows = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(rows) != n:
        raise DataError(f"{source}: header declares {n} rows, found {len(rows)}")
    lead = 2 if kind == "CLS" else 3
    xs, ys, splits, groups = [], [], [], []
    for lineno, line in rows:
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != lead + d:
            _fail(source, lineno, f"expected {lead + d} columns, got {len(fields)}")
        if fields[0] not in SPLITS:
            _fail(source, lineno, f"unknown split {fields[0]!r}")
        try:
            label = int(fields[lead - 1])
        except ValueError:
            _fail(source, lineno, f"label {fields[lead - 1]!r} is not an integer")
        if not 0 <= label < c:
            _fail(source, lineno, f"class id {label} outside [0, {c})")
        splits.append(fields[0])
        ys.append(label)
        if kind == "SEQ":
            groups.append(fields[1])
        xs.append(_floats(fields[lead:], source, lineno))
    ds = build_dataset(kind, np.array(xs).reshape(n, d), ys, splits, c,
                       groups if kind == "SEQ" else None, source)
    if embeddings_path:
        ds = ds.with_embeddings(load_embeddings(embeddings_path, ds.n))
    return ds


def load_embeddings(path, n_expected: int | None = None) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"embedding file not found: {path}")
    source = str(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise DataError(f"{source}: empty file")
    _, nums = _header(lines[0], source, ("EMB",))
    if len(nums) != 2:
        _fail(source, 1, "header must be 'EMB n e'")
    n, e = nums
    rows = [(i + 2, ln) for i, ln in enumerate(lines[1:]) if ln.strip()]
    if len(rows) != n:
        raise DataError(f"{source}: header declares {n} rows, found {len(rows)}")
    if n_expected is not None and n != n_expected:
        raise DataError(f"{source}: {n} embedding rows for {n_expected} examples")
    out = np.empty((n, e))
    for r, (lineno, line) in enumerate(rows):
        fields = line.split(",")
        if len(fields) != e:
            _fail(source, lineno, f"expected {e} columns, got {len(fields)}")
        out[r] = _floats(fields, source, lineno)
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def save_dataset(ds: LabeledDataset, path, embeddings_path=None) -> None:
    path = Path(path)
    out = [f"{ds.kind} {ds.y.size} {ds.feature_dim} {ds.num_classes}"]
    for i in range(ds.n):
        for r in range(ds.offsets[i], ds.offsets[i + 1]):
            lead = [ds.split[i]]
            if ds.is_sequence:
                lead.append(str(ds.group_ids[i]))
            lead.append(str(int(ds.y[r])))
            out.append(",".join(lead + [_fmt(v) for v in ds.x[r]]))
    path.write_text("\n".join(out) + "\n")
    if embeddings_path and ds.embeddings is not None:
        save_embeddings(ds.embeddings, embeddings_path)


def save_embeddings(emb, path) -> None:
    emb = np.asarray(emb, dtype=np.float64)
    lines = [f"EMB {emb.shape[0]} {emb.shape[1]}"]
    lines += [",".join(_fmt(v) for v in row) for row in emb]
    Path(path).write_text("\n".join(lines) + "\n")
