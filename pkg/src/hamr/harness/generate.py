"""Synthetic long-tailed datasets: Gaussian class clusters with geometric class
sizes, split 70/10/20 per class."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..metrics import imbalance_ratio
from ..sampler import make_rng
from .data import LabeledDataset, build_dataset

SPLIT_FRACTIONS = (0.7, 0.1, 0.2)
IR_TOLERANCE = 0.10


def geometric_sizes(num_classes: int, ratio: float, n_total: int, min_size: int = 2) -> np.ndarray:
    """Class sizes decaying geometrically from the largest to about largest/ratio."""
    if num_classes < 2:
        raise ConfigError(f"need at least two classes, got {num_classes}")
    if ratio < 1:
        raise ConfigError(f"imbalance ratio must be >= 1, got {ratio}")
    decay = ratio ** (-1.0 / (num_classes - 1))
    profile = decay ** np.arange(num_classes)
    share = n_total * profile / profile.sum()
    sizes = np.floor(share).astype(np.int64)
    # largest remainders get the leftover examples; ties go to the head classes
    sizes[np.argsort(-(share - sizes), kind="stable")[: n_total - sizes.sum()]] += 1
    sizes = np.maximum(sizes, min_size)
    sizes[0] += n_total - sizes.sum()
    if sizes[0] < sizes[1:].max() or sizes[0] < min_size:
        raise ConfigError(f"cannot fit {num_classes} classes with ratio {ratio} into {n_total} examples")
    return sizes


def split_counts(size: int) -> tuple[int, int, int]:
    n_valid = max(1, int(round(SPLIT_FRACTIONS[1] * size)))
    n_test = max(1 if size >= 3 else 0, int(round(SPLIT_FRACTIONS[2] * size)))
    n_train = size - n_valid - n_test
    if n_train < 1:
        raise ConfigError(f"class of size {size} is too small to split")
    return n_train, n_valid, n_test


def class_means(num_classes: int, dim: int, separation: float, rng) -> np.ndarray:
    """Means at pairwise distance ``separation`` when ``dim >= num_classes``
    (scaled orthonormal directions); random directions otherwise."""
    if dim >= num_classes:
        q, _ = np.linalg.qr(rng.normal(size=(dim, num_classes)))
        return q.T * separation / np.sqrt(2.0)
    dirs = rng.normal(size=(num_classes, dim))
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True) * separation / np.sqrt(2.0)


def generate_longtail(num_classes: int = 10, imbalance_ratio_target: float = 50.0, n_total: int = 4000,
                      embed_dim: int = 16, cluster_separation: float = 3.0, seed: int = 0,
                      noise: float = 1.0) -> LabeledDataset:
    rng = make_rng(seed)
    sizes = geometric_sizes(num_classes, imbalance_ratio_target, n_total)
    means = class_means(num_classes, embed_dim, cluster_separation, rng)
    labels = np.repeat(np.arange(num_classes), sizes)
    x = means[labels] + noise * rng.normal(size=(labels.size, embed_dim))
    split = np.empty(labels.size, dtype=object)
    start = 0
    for c, size in enumerate(sizes):
        n_train, n_valid, _ = split_counts(int(size))
        block = start + rng.permutation(size)
        split[block[:n_train]] = "train"
        split[block[n_train:n_train + n_valid]] = "valid"
        split[block[n_train + n_valid:]] = "test"
        start += size
    # shuffle so example ids carry no class information
    order = rng.permutation(labels.size)
    ds = build_dataset("CLS", x[order], labels[order], split[order], num_classes, source="generator")
    measured = imbalance_ratio(ds.label_counts(), decimals=None)
    if abs(measured - imbalance_ratio_target) > IR_TOLERANCE * imbalance_ratio_target:
        raise ConfigError(f"generated imbalance ratio {measured:.2f} is not within "
                          f"{IR_TOLERANCE:.0%} of the requested {imbalance_ratio_target}")
    return ds


def generate_sequences(num_types: int = 4, imbalance_ratio_target: float = 10.0, n_sentences: int = 600,
                       embed_dim: int = 16, cluster_separation: float = 3.0, seed: int = 0,
                       noise: float = 1.0, max_len: int = 12) -> LabeledDataset:
    """BIO-tagged sentences. Each sentence has one to three entity spans whose
    types follow a geometric frequency profile; every tag has its own cluster."""
    rng = make_rng(seed)
    num_tags = 2 * num_types + 1
    means = class_means(num_tags, embed_dim, cluster_separation, rng)
    decay = imbalance_ratio_target ** (-1.0 / max(num_types - 1, 1))
    type_p = decay ** np.arange(num_types)
    type_p /= type_p.sum()
    xs, ys, groups, splits = [], [], [], []
    split_of = rng.choice(3, size=n_sentences, p=SPLIT_FRACTIONS)
    split_of[:3] = [0, 1, 2]
    for s in range(n_sentences):
        length = int(rng.integers(4, max_len + 1))
        tags = np.zeros(length, dtype=np.int64)
        for _ in range(int(rng.integers(1, 4))):
            etype = int(rng.choice(num_types, p=type_p)) + 1
            span = int(rng.integers(1, 4))
            start = int(rng.integers(0, max(length - span, 0) + 1))
            if np.any(tags[max(start - 1, 0):start + span + 1]):
                continue
            tags[start] = 2 * etype - 1
            tags[start + 1:start + span] = 2 * etype
        xs.append(means[tags] + noise * rng.normal(size=(length, embed_dim)))
        ys.append(tags)
        groups += [f"s{s}"] * length
        splits += [("train", "valid", "test")[split_of[s]]] * length
    # every tag must occur in train; plant one sentence per type if needed
    ds_y = np.concatenate(ys)
    ds_split = np.array(splits, dtype=object)
    for etype in range(1, num_types + 1):
        for tag in (2 * etype - 1, 2 * etype):
            if not np.any((ds_y == tag) & (ds_split == "train")):
                tags = np.array([0, 2 * etype - 1, 2 * etype, 0])
                xs.append(means[tags] + noise * rng.normal(size=(4, embed_dim)))
                ys.append(tags)
                groups += [f"s{len(ys) - 1}"] * 4
                splits += ["train"] * 4
                ds_y = np.concatenate(ys)
                ds_split = np.array(splits, dtype=object)
    return build_dataset("SEQ", np.vstack(xs), ds_y, ds_split, num_tags, groups, source="generator")
