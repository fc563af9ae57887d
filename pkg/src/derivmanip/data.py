"""Datasets, synthetic generation, label corruption, imbalance and splits.

A Dataset keeps the observed (possibly corrupted) labels next to the clean
ones and a per-example corruption flag. The clean labels and flags are for
auditing only and never reach the training signal.

Every randomized operation takes a seed (int or ``numpy.random.SeedSequence``)
and is a pure function of its inputs and that seed.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from .errors import ConfigError, ParseError, StratificationError

DATASET_MAGIC = b"DMD1"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    observed_labels: np.ndarray
    clean_labels: np.ndarray
    corrupted_flags: np.ndarray
    class_count: int

    def __post_init__(self):
        n = len(self.observed_labels)
        if n < 1:
            raise ConfigError("dataset is empty")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise ConfigError(f"features {self.features.shape} do not match {n} labels")
        for labels in (self.observed_labels, self.clean_labels):
            if len(labels) != n or labels.min() < 0 or labels.max() >= self.class_count:
                raise ConfigError(f"labels must be in [0, {self.class_count})")
        if not np.array_equal(self.corrupted_flags, self.observed_labels != self.clean_labels):
            raise ConfigError("corruption flags disagree with observed != clean")

    def __len__(self):
        return len(self.observed_labels)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.features[idx],
            self.observed_labels[idx],
            self.clean_labels[idx],
            self.corrupted_flags[idx],
            self.class_count,
        )

    def with_labels(self, observed) -> "Dataset":
        """Same features and clean labels, new observed labels; flags recomputed."""
        observed = np.asarray(observed, dtype=np.int64)
        return Dataset(
            self.features, observed, self.clean_labels, observed != self.clean_labels, self.class_count
        )


def make_dataset(features, labels, class_count=None) -> Dataset:
    """Uncorrupted dataset: clean labels equal the observed ones."""
    labels = np.asarray(labels, dtype=np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1
    return Dataset(
        np.asarray(features, dtype=np.float64),
        labels,
        labels.copy(),
        np.zeros(len(labels), dtype=bool),
        int(class_count),
    )


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int = 2
    per_class_count: int = 5000
    feature_dim: int = 50
    class_center_separation: float = 4.0
    noise_sigma: float = 1.0
    seed: int = 0

    def validate(self):
        if self.class_count < 2 or self.per_class_count < 1 or self.feature_dim < self.class_count:
            raise ConfigError("synthetic spec needs C >= 2, per-class >= 1 and D >= C")
        if not (self.class_center_separation > 0 and self.noise_sigma > 0):
            raise ConfigError("separation and sigma must be positive")
        return self


def class_centers(spec: SyntheticSpec) -> np.ndarray:
    """Class c sits at separation * e_c."""
    centers = np.zeros((spec.class_count, spec.feature_dim))
    centers[np.arange(spec.class_count), np.arange(spec.class_count)] = spec.class_center_separation
    return centers


def gen_synthetic(spec: SyntheticSpec, seed=None) -> Dataset:
    """Isotropic Gaussian blobs, classes interleaved in a seeded random order."""
    spec.validate()
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    labels = np.repeat(np.arange(spec.class_count), spec.per_class_count)
    labels = labels[rng.permutation(len(labels))]
    noise = rng.standard_normal((len(labels), spec.feature_dim)) * spec.noise_sigma
    return make_dataset(class_centers(spec)[labels] + noise, labels, spec.class_count)


def corrupt_symmetric(dataset: Dataset, r: float, seed) -> Dataset:
    """With probability r, relabel an example to a uniformly drawn other class."""
    if not 0.0 <= r <= 1.0:
        raise ConfigError(f"noise rate must be in [0, 1], got {r}")
    C = dataset.class_count
    if C < 2 and r > 0:
        raise ConfigError("symmetric noise needs at least two classes")
    rng = np.random.default_rng(seed)
    n = len(dataset)
    hit = rng.random(n) < r
    shift = rng.integers(1, max(C, 2), size=n)
    observed = dataset.observed_labels.copy()
    observed[hit] = (dataset.clean_labels[hit] + shift[hit]) % C
    return dataset.with_labels(observed)


def _check_pairs(pairs, C):
    seen = set()
    for a, b in pairs:
        if a == b or not (0 <= a < C and 0 <= b < C):
            raise ConfigError(f"invalid class pair ({a}, {b}) for C={C}")
        if a in seen or b in seen:
            raise ConfigError(f"class pairs overlap at ({a}, {b})")
        seen.update((a, b))


def corrupt_asymmetric(dataset: Dataset, pairs: Sequence[Tuple[int, int]], r: float, seed) -> Dataset:
    """Within each class pair, flip to the partner class with probability r."""
    if not 0.0 <= r <= 1.0:
        raise ConfigError(f"noise rate must be in [0, 1], got {r}")
    _check_pairs(pairs, dataset.class_count)
    partner = np.arange(dataset.class_count)
    for a, b in pairs:
        partner[a], partner[b] = b, a
    rng = np.random.default_rng(seed)
    clean = dataset.clean_labels
    eligible = partner[clean] != clean
    hit = (rng.random(len(dataset)) < r) & eligible
    observed = dataset.observed_labels.copy()
    observed[hit] = partner[clean[hit]]
    return dataset.with_labels(observed)


def sample_pairs(class_count: int, n_pairs: int, seed) -> list:
    """Seeded choice of disjoint class pairs for asymmetric noise."""
    if 2 * n_pairs > class_count:
        raise ConfigError(f"cannot pick {n_pairs} disjoint pairs from {class_count} classes")
    order = np.random.default_rng(seed).permutation(class_count)[: 2 * n_pairs]
    return [tuple(sorted((int(order[2 * i]), int(order[2 * i + 1])))) for i in range(n_pairs)]


def subsample_imbalance(dataset: Dataset, keep_counts, seed) -> Dataset:
    """Keep ``keep_counts[c]`` uniformly chosen examples of each observed class.

    ``keep_counts`` is a sequence indexed by class or a {class: count} dict;
    classes missing from a dict are kept whole. Original order is preserved.
    """
    counts = _as_count_map(keep_counts, dataset.class_count)
    rng = np.random.default_rng(seed)
    keep = []
    for c in range(dataset.class_count):
        idx = np.flatnonzero(dataset.observed_labels == c)
        want = counts.get(c, len(idx))
        if want > len(idx):
            raise ConfigError(f"class {c}: requested {want} examples, only {len(idx)} available")
        keep.append(idx if want == len(idx) else rng.choice(idx, size=want, replace=False))
    return dataset.subset(np.sort(np.concatenate(keep)))


def _as_count_map(keep_counts, C) -> Dict[int, int]:
    if isinstance(keep_counts, dict):
        return {int(k): int(v) for k, v in keep_counts.items()}
    if len(keep_counts) != C:
        raise ConfigError(f"need one keep count per class ({C}), got {len(keep_counts)}")
    return {c: int(v) for c, v in enumerate(keep_counts)}


def split(dataset: Dataset, train_fraction: float, seed):
    """Stratified (by clean label) train/validation split.

    The validation part carries clean labels, so it stays trusted even if the
    training part is corrupted afterwards.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_idx, val_idx = [], []
    for c in range(dataset.class_count):
        idx = np.flatnonzero(dataset.clean_labels == c)
        if len(idx) == 0:
            continue
        if len(idx) < 2:
            raise StratificationError(f"class {c} has fewer than 2 examples")
        idx = rng.permutation(idx)
        n_train = min(max(int(round(train_fraction * len(idx))), 1), len(idx) - 1)
        train_idx.append(idx[:n_train])
        val_idx.append(idx[n_train:])
    train = dataset.subset(np.sort(np.concatenate(train_idx)))
    val = dataset.subset(np.sort(np.concatenate(val_idx)))
    return train, val.with_labels(val.clean_labels)


# ---------------------------------------------------------------- file formats


def load_dataset(path, fmt=None, class_count=None) -> Dataset:
    fmt = fmt or _guess_format(path)
    if fmt == "csv":
        return _load_csv(path, class_count)
    if fmt == "dmbin":
        return _load_dmbin(path)
    raise ConfigError(f"unknown dataset format {fmt!r}")


def save_dataset(dataset: Dataset, path, fmt=None) -> None:
    fmt = fmt or _guess_format(path)
    if fmt == "csv":
        _save_csv(dataset, path)
    elif fmt == "dmbin":
        _save_dmbin(dataset, path)
    else:
        raise ConfigError(f"unknown dataset format {fmt!r}")


def _guess_format(path) -> str:
    return "dmbin" if str(path).endswith(".dmbin") else "csv"


def _load_csv(path, class_count=None) -> Dataset:
    labels, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0].strip() != "label":
            raise ParseError(f"{path}:1: header must start with 'label'")
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise ParseError(f"{path}:{lineno}: expected {width + 1} fields, got {len(row)}")
            try:
                labels.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if labels[-1] < 0 or (class_count is not None and labels[-1] >= class_count):
                raise ConfigError(f"{path}:{lineno}: label {labels[-1]} out of range")
    if not labels:
        raise ParseError(f"{path}: no data rows")
    return make_dataset(np.array(rows, dtype=np.float64).reshape(len(labels), width), labels, class_count)


def _save_csv(dataset: Dataset, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"f{j}" for j in range(dataset.feature_dim)])
        for y, x in zip(dataset.observed_labels, dataset.features):
            writer.writerow([int(y)] + [repr(float(v)) for v in x])


def _save_dmbin(dataset: Dataset, path) -> None:
    n, d = dataset.features.shape
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<III", n, d, dataset.class_count))
        fh.write(dataset.observed_labels.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(dataset.features, dtype="<f4").tobytes())
        fh.write(dataset.clean_labels.astype("<u4").tobytes())
        fh.write(dataset.corrupted_flags.astype("u1").tobytes())


def _load_dmbin(path) -> Dataset:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != DATASET_MAGIC:
        raise ParseError(f"{path}: not a DMD1 file")
    n, d, C = struct.unpack_from("<III", data, 4)
    expected = 16 + 4 * n + 4 * n * d + 4 * n + n
    if len(data) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, found {len(data)}")
    off = 16
    observed = np.frombuffer(data, "<u4", n, off).astype(np.int64)
    off += 4 * n
    features = np.frombuffer(data, "<f4", n * d, off).reshape(n, d).astype(np.float64)
    off += 4 * n * d
    clean = np.frombuffer(data, "<u4", n, off).astype(np.int64)
    off += 4 * n
    flags = np.frombuffer(data, "u1", n, off).astype(bool)
    try:
        return Dataset(features, observed, clean, flags, int(C))
    except ConfigError as exc:
        raise ParseError(f"{path}: {exc}") from None
