"""Synthetic MADELON-style binary classification data, MNIST IDX ingestion,
standardization, and deterministic minibatching."""

import csv
import gzip
import struct
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .linalg import make_rng

MNIST_IMAGE_MAGIC = 2051
MNIST_LABEL_MAGIC = 2049


class FeatureRole(Enum):
    USEFUL = "useful"
    REDUNDANT = "redundant"
    NOISE = "noise"


@dataclass
class MadelonConfig:
    """Parameters of the synthetic generator.

    Two Gaussian class clusters with identity covariance live in the useful
    block, centered at +/- (class_sep / sqrt(d_useful)) * u for a random unit
    direction u; redundant features are normalized random linear mixes of the
    useful ones; the rest are pure standard-normal probes.
    """

    n_train: int
    n_test: int
    d_total: int
    d_useful: int
    d_redundant: int = 0
    class_sep: float = 2.0
    label_flip: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.d_useful < 1 or self.d_useful + self.d_redundant > self.d_total:
            raise ValueError("need 1 <= d_useful and d_useful + d_redundant <= d_total")
        if self.n_train < 2 or self.n_test < 2:
            raise ValueError("n_train and n_test must be >= 2")
        if not 0.0 <= self.label_flip < 1.0:
            raise ValueError("label_flip must be in [0, 1)")
        if self.class_sep <= 0:
            raise ValueError("class_sep must be > 0")

    def to_dict(self):
        return {
            "n_train": self.n_train, "n_test": self.n_test,
            "d_total": self.d_total, "d_useful": self.d_useful,
            "d_redundant": self.d_redundant, "class_sep": self.class_sep,
            "label_flip": self.label_flip, "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class Dataset:
    """Input matrix plus labels: {-1,+1} vector for binary problems, one-hot
    matrix for multiclass. ``mean``/``std`` hold the train-fitted
    standardization statistics once ``standardize`` has run."""

    x: np.ndarray
    y: np.ndarray
    feature_roles: list | None = None
    mean: np.ndarray | None = None
    std: np.ndarray | None = None

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def dim(self):
        return self.x.shape[1]


def _sample_split(rng, cfg, n, center_dir, mixing):
    """One balanced split: half the rows per class, shuffled at the end."""
    half = n // 2
    labels = np.concatenate([np.ones(half), -np.ones(n - half)])
    offset = (cfg.class_sep / np.sqrt(cfg.d_useful)) * center_dir
    useful = rng.standard_normal((n, cfg.d_useful)) + labels[:, None] * offset
    blocks = [useful]
    if cfg.d_redundant > 0:
        blocks.append(useful @ mixing)
    d_probe = cfg.d_total - cfg.d_useful - cfg.d_redundant
    if d_probe > 0:
        blocks.append(rng.standard_normal((n, d_probe)))
    x = np.concatenate(blocks, axis=1)
    if cfg.label_flip > 0:
        flips = rng.random(n) < cfg.label_flip
        labels = np.where(flips, -labels, labels)
    perm = rng.permutation(n)
    return x[perm], labels[perm]


def gen_madelon(cfg, rng=None):
    """Balanced two-class train/test pair from one shared generative model.

    The class direction and the redundant mixing matrix are drawn once and
    reused for both splits; every draw is a pure function of (cfg, seed).
    """
    if rng is None:
        rng = make_rng(cfg.seed)
    center_dir = rng.standard_normal(cfg.d_useful)
    center_dir /= np.linalg.norm(center_dir)
    if cfg.d_redundant > 0:
        mixing = rng.uniform(-1.0, 1.0, size=(cfg.d_useful, cfg.d_redundant))
        mixing /= np.linalg.norm(mixing, axis=0, keepdims=True)
    else:
        mixing = None

    roles = (
        [FeatureRole.USEFUL] * cfg.d_useful
        + [FeatureRole.REDUNDANT] * cfg.d_redundant
        + [FeatureRole.NOISE] * (cfg.d_total - cfg.d_useful - cfg.d_redundant)
    )
    x_tr, y_tr = _sample_split(rng, cfg, cfg.n_train, center_dir, mixing)
    x_te, y_te = _sample_split(rng, cfg, cfg.n_test, center_dir, mixing)
    return (
        Dataset(x=x_tr, y=y_tr, feature_roles=list(roles)),
        Dataset(x=x_te, y=y_te, feature_roles=list(roles)),
    )


def _read_be32(fh, what):
    raw = fh.read(4)
    if len(raw) != 4:
        raise ValueError(f"truncated IDX file while reading {what}")
    return struct.unpack(">i", raw)[0]


def _open_maybe_gzip(path):
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_mnist_idx(image_path, label_path):
    """MNIST from the standard big-endian IDX pair (plain or gzipped).

    Pixels are scaled to [0, 1]; labels become a one-hot matrix over the 10
    classes. Raises ValueError on bad magic numbers, truncation, or an
    image/label count mismatch.
    """
    with _open_maybe_gzip(image_path) as fh:
        magic = _read_be32(fh, "image magic")
        if magic != MNIST_IMAGE_MAGIC:
            raise ValueError(f"bad image magic {magic}, expected {MNIST_IMAGE_MAGIC}")
        count = _read_be32(fh, "image count")
        rows = _read_be32(fh, "row count")
        cols = _read_be32(fh, "col count")
        raw = fh.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise ValueError("truncated IDX image file")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)

    with _open_maybe_gzip(label_path) as fh:
        magic = _read_be32(fh, "label magic")
        if magic != MNIST_LABEL_MAGIC:
            raise ValueError(f"bad label magic {magic}, expected {MNIST_LABEL_MAGIC}")
        label_count = _read_be32(fh, "label count")
        raw = fh.read(label_count)
        if len(raw) != label_count:
            raise ValueError("truncated IDX label file")
        labels = np.frombuffer(raw, dtype=np.uint8)

    if label_count != count:
        raise ValueError(f"image count {count} != label count {label_count}")
    if labels.size and labels.max() > 9:
        raise ValueError("labels outside 0..9")
    onehot = np.zeros((count, 10))
    onehot[np.arange(count), labels] = 1.0
    return Dataset(x=pixels.astype(np.float64) / 255.0, y=onehot)


def standardize(train, test):
    """Center/scale every feature with train statistics; constant features
    (std below 1e-12) map to exactly zero in both splits."""
    mean = train.x.mean(axis=0)
    std = train.x.std(axis=0)
    scale = np.where(std < 1e-12, 1.0, std)
    x_tr = (train.x - mean) / scale
    x_te = (test.x - mean) / scale
    constant = std < 1e-12
    if np.any(constant):
        x_tr[:, constant] = 0.0
        x_te[:, constant] = 0.0
    return (
        replace(train, x=x_tr, mean=mean, std=std),
        replace(test, x=x_te, mean=mean, std=std),
    )


def batches(dataset, n, rng):
    """One epoch of shuffled (x, y) minibatches.

    The trailing short batch is kept unless it has fewer than 2 examples
    (batch covariance estimation needs at least 2 rows).
    """
    if not 2 <= n <= dataset.n:
        raise ValueError(f"batch size {n} must be in [2, {dataset.n}]")
    perm = rng.permutation(dataset.n)
    for start in range(0, dataset.n, n):
        idx = perm[start : start + n]
        if idx.size < 2:
            return
        yield dataset.x[idx], dataset.y[idx]


def save_csv(dataset, path, preamble=None):
    """Feature columns f0..f{d-1} plus a trailing integer label column.

    ``preamble`` lines become leading # comments (provenance: config hash,
    seed); ``load_csv`` skips them.
    """
    with open(path, "w", newline="") as fh:
        if preamble:
            for line in preamble:
                fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow([f"f{i}" for i in range(dataset.dim)] + ["label"])
        labels = np.ravel(dataset.y) if dataset.y.ndim == 1 else np.argmax(dataset.y, axis=1)
        for row, label in zip(dataset.x, labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def save_roles_csv(roles, path, preamble=None):
    with open(path, "w", newline="") as fh:
        if preamble:
            for line in preamble:
                fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["feature", "role"])
        for i, role in enumerate(roles):
            writer.writerow([f"f{i}", role.value])


def load_csv(path):
    """Inverse of ``save_csv``: features f0..f{d-1} plus a binary label column."""
    with open(path) as fh:
        lines = [line for line in fh if not line.startswith("#")]
    raw = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    if raw.shape[1] < 2:
        raise ValueError(f"{path}: expected at least one feature and a label column")
    return Dataset(x=raw[:, :-1], y=raw[:, -1])
