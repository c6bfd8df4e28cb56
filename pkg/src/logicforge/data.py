"""Dataset ingestion, seeded splitting, and input feature quantization."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .quantizer import QuantizerSpec, quantize_array

SPLITS = ("train", "val", "test")


@dataclass
class Dataset:
    features: np.ndarray  # (N, F) float64
    labels: np.ndarray  # (N,) int64
    feature_ranges: np.ndarray | None = None  # (F, 2) min/max from the training split

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (N, F) and labels (N,)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("dataset features contain NaN or Inf")
        if np.any(self.labels < 0):
            raise ValueError("labels must be nonnegative class indices")

    def __len__(self):
        return self.labels.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.features[idx], self.labels[idx], self.feature_ranges)


@dataclass
class DatasetSplits:
    train: Dataset
    val: Dataset
    test: Dataset


def compute_ranges(features: np.ndarray) -> np.ndarray:
    return np.stack([features.min(axis=0), features.max(axis=0)], axis=1)


def with_ranges(splits: DatasetSplits) -> DatasetSplits:
    """Attach min/max ranges computed on the training split to every split."""
    ranges = compute_ranges(splits.train.features)
    return DatasetSplits(*(replace(getattr(splits, s), feature_ranges=ranges) for s in SPLITS))


def split_dataset(ds: Dataset, seed: int, fractions=(0.6, 0.2, 0.2)) -> DatasetSplits:
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    parts = perm[:n_train], perm[n_train : n_train + n_val], perm[n_train + n_val :]
    return with_ranges(DatasetSplits(*(ds.subset(np.sort(p)) for p in parts)))


def load_csv(path, seed: int = 0, num_classes: int | None = None) -> DatasetSplits:
    """Read a CSV with a header row; the last non-``split`` column is the label.

    An optional ``split`` column (train/val/test) is honoured; otherwise a
    seeded 60/20/20 split is drawn.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [r for r in reader if r]
    split_col = header.index("split") if "split" in header else None
    cols = [i for i in range(len(header)) if i != split_col]
    label_col, feat_cols = cols[-1], cols[:-1]
    try:
        feats = np.array([[float(r[i]) for i in feat_cols] for r in rows], dtype=np.float64)
        labels = np.array([int(float(r[label_col])) for r in rows], dtype=np.int64)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from exc
    feats = feats.reshape(len(rows), len(feat_cols))
    if num_classes is not None and labels.size and labels.max() >= num_classes:
        raise ValueError(f"{path}: label {labels.max()} out of range for {num_classes} classes")
    ds = Dataset(feats, labels)
    if split_col is None:
        return split_dataset(ds, seed)
    tags = np.array([r[split_col].strip().lower() for r in rows])
    bad = set(tags) - set(SPLITS)
    if bad:
        raise ValueError(f"{path}: unknown split values {sorted(bad)}")
    return with_ranges(DatasetSplits(*(ds.subset(np.flatnonzero(tags == s)) for s in SPLITS)))


def synthetic_blobs(n: int, num_features: int, num_classes: int, seed: int = 0, spread: float = 1.0) -> Dataset:
    """Gaussian class clusters with random centres; labels uniform over classes."""
    rng = np.random.default_rng(seed)
    centres = rng.normal(0.0, 2.0, size=(num_classes, num_features))
    labels = rng.integers(0, num_classes, size=n)
    feats = centres[labels] + rng.normal(0.0, spread, size=(n, num_features))
    return Dataset(feats, labels)


def write_csv(ds: Dataset, path, split_tags=None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = [f"f{i}" for i in range(ds.num_features)] + ["label"]
        if split_tags is not None:
            header.append("split")
        w.writerow(header)
        for i in range(len(ds)):
            row = [repr(float(v)) for v in ds.features[i]] + [int(ds.labels[i])]
            if split_tags is not None:
                row.append(split_tags[i])
            w.writerow(row)


def input_quantizer(bits: int) -> QuantizerSpec:
    """Unsigned quantizer over [0, 1]: x == 1 maps to the top code."""
    return QuantizerSpec(bits, 1.0 / ((1 << bits) - 1), signed=False)


def quantize_features(features: np.ndarray, ranges: np.ndarray, bits: int) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    lo, hi = ranges[:, 0], ranges[:, 1]
    span = hi - lo
    degenerate = span == 0
    unit = np.clip((features - lo) / np.where(degenerate, 1.0, span), 0.0, 1.0)
    unit[:, degenerate] = 0.0
    return quantize_array(unit, input_quantizer(bits))


def quantize_inputs(ds: Dataset, input_bits: int) -> np.ndarray:
    if ds.feature_ranges is None:
        raise ValueError("dataset has no feature ranges; compute them on the training split first")
    return quantize_features(ds.features, ds.feature_ranges, input_bits)
