"""Dataset construction, IDX parsing and non-IID partitioning."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class FormatError(ValueError):
    """Malformed binary input (bad magic, truncation, trailing bytes)."""


class ConsistencyError(ValueError):
    """Structurally valid inputs that disagree with each other."""


@dataclass
class Dataset:
    """Feature matrix plus integer labels.

    source_indices optionally records which rows of an origin dataset
    these rows were taken from, so holdout disjointness is checkable.
    """

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    source_indices: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be (n, d), labels (n,)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ConsistencyError("feature and label row counts differ")
        if self.class_count < 1:
            raise ValueError("class_count must be positive")
        if self.labels.size and (self.labels.min() < 0
                                 or self.labels.max() >= self.class_count):
            raise ValueError("label outside [0, class_count)")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain NaN or Inf")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def take(self, indices) -> "Dataset":
        """Row subset; source_indices are the picked row positions."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx],
                       self.class_count, idx.copy())

    def drop(self, indices) -> "Dataset":
        """All rows except the given ones."""
        mask = np.ones(len(self), dtype=bool)
        mask[np.asarray(indices, dtype=np.int64)] = False
        return self.take(np.flatnonzero(mask))


@dataclass
class Partition:
    """Disjoint per-worker row indices into one dataset."""

    shards: list[np.ndarray]

    def __post_init__(self):
        self.shards = [np.asarray(s, dtype=np.int64) for s in self.shards]


def generate_synthetic(seed: int, class_count: int, input_dim: int,
                       samples_per_class: int,
                       cluster_spread: float) -> Dataset:
    """Gaussian blobs, one per class, means on the unit sphere.

    Exactly samples_per_class rows per class; rows are shuffled. The
    same arguments always produce the same dataset.
    """
    if class_count < 1 or input_dim < 1 or samples_per_class < 1:
        raise ValueError("class_count, input_dim, samples_per_class must be >= 1")
    if cluster_spread < 0:
        raise ValueError("cluster_spread must be >= 0")
    rng = np.random.default_rng(seed)
    means = rng.standard_normal((class_count, input_dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    feats = np.repeat(means, samples_per_class, axis=0)
    if cluster_spread > 0:
        feats = feats + cluster_spread * rng.standard_normal(feats.shape)
    labels = np.repeat(np.arange(class_count), samples_per_class)
    order = rng.permutation(feats.shape[0])
    return Dataset(feats[order], labels[order], class_count)


def _read_idx_header(buf: bytes, path: str, expected_magic: int,
                     dims: int) -> tuple[tuple[int, ...], int]:
    head = 4 * (1 + dims)
    if len(buf) < head:
        raise FormatError(f"{path}: truncated header")
    magic = struct.unpack(">i", buf[:4])[0]
    if magic != expected_magic:
        raise FormatError(
            f"{path}: magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    shape = struct.unpack(f">{dims}i", buf[4:head])
    return shape, head


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Parse a big-endian IDX image/label file pair.

    Pixels are scaled to [0, 1]. Fails closed: wrong magic, truncated
    payload or trailing bytes raise FormatError; an image/label count
    mismatch raises ConsistencyError. No partial dataset is returned.
    """
    with open(images_path, "rb") as fh:
        img_buf = fh.read()
    with open(labels_path, "rb") as fh:
        lab_buf = fh.read()

    (n_img, rows, cols), img_off = _read_idx_header(
        img_buf, images_path, IDX_IMAGES_MAGIC, 3)
    (n_lab,), lab_off = _read_idx_header(
        lab_buf, labels_path, IDX_LABELS_MAGIC, 1)

    if len(img_buf) - img_off != n_img * rows * cols:
        raise FormatError(f"{images_path}: payload size does not match header")
    if len(lab_buf) - lab_off != n_lab:
        raise FormatError(f"{labels_path}: payload size does not match header")
    if n_img != n_lab:
        raise ConsistencyError(
            f"{n_img} images but {n_lab} labels")

    pixels = np.frombuffer(img_buf, dtype=np.uint8, offset=img_off)
    feats = pixels.reshape(n_img, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lab_buf, dtype=np.uint8, offset=lab_off).astype(np.int64)
    return Dataset(feats, labels, int(labels.max()) + 1 if n_lab else 1)


def partition_noniid(dataset: Dataset, worker_count: int,
                     concentration: float, seed: int) -> Partition:
    """Split rows across workers with a per-class Dirichlet draw.

    Low concentration gives skewed class mixes, high concentration
    approaches an even split. Shards are disjoint, cover every row,
    and are never empty (rows are reassigned from the largest shard
    if the draw starved a worker).
    """
    n = len(dataset)
    if worker_count < 1:
        raise ValueError("worker_count must be >= 1")
    if worker_count > n:
        raise ValueError(f"worker_count {worker_count} exceeds {n} samples")
    if concentration <= 0:
        raise ValueError("concentration must be > 0")
    rng = np.random.default_rng(seed)
    shards: list[list[int]] = [[] for _ in range(worker_count)]
    for cls in range(dataset.class_count):
        idx_cls = np.flatnonzero(dataset.labels == cls)
        if idx_cls.size == 0:
            continue
        rng.shuffle(idx_cls)
        proportions = rng.dirichlet(np.repeat(concentration, worker_count))
        cuts = (np.cumsum(proportions) * idx_cls.size).astype(int)[:-1]
        for w, part in enumerate(np.split(idx_cls, cuts)):
            shards[w].extend(part.tolist())
    # starved workers take rows from whoever currently holds the most
    while any(len(s) == 0 for s in shards):
        donor = max(range(worker_count), key=lambda w: len(shards[w]))
        taker = min(w for w in range(worker_count) if len(shards[w]) == 0)
        shards[taker].append(shards[donor].pop())
    return Partition([np.sort(np.asarray(s, dtype=np.int64)) for s in shards])


def make_quasi_validation(source: Dataset, size: int, seed: int,
                          noise_scale: float) -> Dataset:
    """Sample held-out rows and jitter their features.

    The returned dataset records which source rows it took via
    source_indices; the caller must keep those rows away from the
    training shards. noise_scale 0 reproduces the rows exactly.
    """
    if size < 1:
        raise ValueError("quasi-validation size must be >= 1")
    if size > len(source):
        raise ValueError(f"size {size} exceeds {len(source)} source rows")
    if noise_scale < 0:
        raise ValueError("noise_scale must be >= 0")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(source), size=size, replace=False))
    feats = source.features[idx].copy()
    if noise_scale > 0:
        feats += noise_scale * rng.standard_normal(feats.shape)
    return Dataset(feats, source.labels[idx], source.class_count, idx.copy())


def train_test_split(dataset: Dataset, test_fraction: float,
                     seed: int) -> tuple[Dataset, Dataset]:
    """Stratified split into (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    test_idx: list[int] = []
    for cls in range(dataset.class_count):
        idx_cls = np.flatnonzero(dataset.labels == cls)
        k = int(round(idx_cls.size * test_fraction))
        if idx_cls.size:
            picked = rng.choice(idx_cls, size=min(k, idx_cls.size), replace=False)
            test_idx.extend(picked.tolist())
    test_idx = np.sort(np.asarray(test_idx, dtype=np.int64))
    mask = np.ones(len(dataset), dtype=bool)
    mask[test_idx] = False
    return dataset.take(np.flatnonzero(mask)), dataset.take(test_idx)


def save_csv(dataset: Dataset, path: str) -> None:
    """Write `label,f0..f{d-1}` rows; floats keep full precision."""
    d = dataset.input_dim
    header = "label," + ",".join(f"f{i}" for i in range(d))
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row, lab in zip(dataset.features, dataset.labels):
            fh.write(str(int(lab)) + ","
                     + ",".join(repr(float(v)) for v in row) + "\n")


def load_csv(path: str) -> Dataset:
    """Read a dataset written by save_csv."""
    with open(path) as fh:
        header = fh.readline().strip()
        cols = header.split(",")
        if cols[0] != "label" or any(c != f"f{i}" for i, c in enumerate(cols[1:])):
            raise FormatError(f"{path}: unexpected header {header!r}")
        labels, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != len(cols):
                raise FormatError(f"{path}: row width does not match header")
            labels.append(int(parts[0]))
            rows.append([float(v) for v in parts[1:]])
    if not rows:
        raise FormatError(f"{path}: no data rows")
    feats = np.asarray(rows, dtype=np.float64)
    labs = np.asarray(labels, dtype=np.int64)
    return Dataset(feats, labs, int(labs.max()) + 1)
