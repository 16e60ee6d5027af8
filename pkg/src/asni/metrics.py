"""Evaluation quantities tracked during training: accuracy, the Frobenius
norm of the activation correlation matrix, silhouette coefficient, and the
zero-activation fraction."""

import csv
import math
from dataclasses import dataclass

import numpy as np

CSV_HEADER = [
    "iteration", "train_loss", "test_loss", "test_accuracy",
    "corr_norm_l1", "corr_norm_l2", "zero_frac_l1", "zero_frac_l2",
    "silhouette",
]


@dataclass
class MetricsRecord:
    """One evaluation point of a training run. Layer-resolved fields refer to
    the first and second hidden layers and stay NaN when absent."""

    iteration: int
    train_loss: float
    test_loss: float
    test_accuracy: float
    corr_norm_l1: float = math.nan
    corr_norm_l2: float = math.nan
    zero_frac_l1: float = math.nan
    zero_frac_l2: float = math.nan
    silhouette: float = math.nan

    def to_row(self):
        return [
            str(self.iteration),
            repr(float(self.train_loss)), repr(float(self.test_loss)),
            repr(float(self.test_accuracy)),
            repr(float(self.corr_norm_l1)), repr(float(self.corr_norm_l2)),
            repr(float(self.zero_frac_l1)), repr(float(self.zero_frac_l2)),
            repr(float(self.silhouette)),
        ]


def write_metrics_csv(records, path, preamble=None):
    """Serialize records in the fixed column order; ``preamble`` lines are
    written as leading # comments (used to embed config hash and seed)."""
    with open(path, "w", newline="") as fh:
        if preamble:
            for line in preamble:
                fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(rec.to_row())


def read_run_meta(path):
    """key=value pairs from the leading # comment lines of a metrics CSV."""
    meta = {}
    with open(path, newline="") as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                meta[key.strip()] = value.strip()
    return meta


def read_metrics_csv(path):
    records = []
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    for row in rows[1:]:
        records.append(MetricsRecord(
            iteration=int(row[0]),
            train_loss=float(row[1]), test_loss=float(row[2]),
            test_accuracy=float(row[3]),
            corr_norm_l1=float(row[4]), corr_norm_l2=float(row[5]),
            zero_frac_l1=float(row[6]), zero_frac_l2=float(row[7]),
            silhouette=float(row[8]),
        ))
    return records


def accuracy(predictions, labels):
    """Fraction of correct predictions.

    Multi-column predictions are classified by argmax (ties go to the lowest
    class index); single-column or 1-D predictions are classified by sign
    against {-1,+1} labels, with 0 counting as the negative class.
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    labels = np.asarray(labels)
    if predictions.ndim == 2 and predictions.shape[1] > 1:
        pred_cls = np.argmax(predictions, axis=1)
        true_cls = np.argmax(labels, axis=1) if labels.ndim == 2 else labels.astype(int)
    else:
        pred_cls = np.where(np.ravel(predictions) > 0, 1, -1)
        true_cls = np.where(np.ravel(labels) > 0, 1, -1)
    if pred_cls.shape != true_cls.shape:
        raise ValueError("prediction/label count mismatch")
    return float(np.mean(pred_cls == true_cls))


def correlation_norm(activations, var_floor=1e-12):
    """Frobenius norm of the column correlation matrix T.

    T_ij = S_ij / sqrt(S_ii S_jj) for the column covariance S; units with
    variance below ``var_floor`` (dead RELUs) contribute T_ii = 1 and zero
    off-diagonals instead of NaN.
    """
    a = np.asarray(activations, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 2:
        raise ValueError("activations must be n x d with n >= 2")
    centered = a - a.mean(axis=0)
    s = (centered.T @ centered) / a.shape[0]
    var = np.diag(s).copy()
    dead = var < var_floor
    scale = np.sqrt(np.where(dead, 1.0, var))
    t = s / np.outer(scale, scale)
    t[dead, :] = 0.0
    t[:, dead] = 0.0
    np.fill_diagonal(t, 1.0)
    return float(np.linalg.norm(t))


def silhouette(points, cluster_labels):
    """Mean silhouette coefficient with Euclidean distances.

    s(i) = (b(i) - a(i)) / max(a(i), b(i)) with a the mean distance to the
    own cluster (excluding self) and b the smallest mean distance to any
    other cluster; members of singleton clusters score 0.
    """
    pts = np.asarray(points, dtype=np.float64)
    labels = np.asarray(cluster_labels)
    if pts.ndim != 2 or pts.shape[0] != labels.shape[0]:
        raise ValueError("points must be n x d with one label per row")
    uniques = np.unique(labels)
    if uniques.size < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    sq = np.sum(pts**2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    dist = np.sqrt(np.maximum(d2, 0.0))

    n = pts.shape[0]
    members = {c: np.flatnonzero(labels == c) for c in uniques}
    scores = np.zeros(n)
    for c in uniques:
        idx = members[c]
        if idx.size == 1:
            scores[idx] = 0.0
            continue
        a = dist[np.ix_(idx, idx)].sum(axis=1) / (idx.size - 1)
        b = np.full(idx.size, np.inf)
        for other in uniques:
            if other == c:
                continue
            b = np.minimum(b, dist[np.ix_(idx, members[other])].mean(axis=1))
        denom = np.maximum(a, b)
        scores[idx] = np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(scores.mean())


def zero_fraction(activations, tol=1e-12):
    """Fraction of entries with magnitude at most ``tol``."""
    if tol < 0:
        raise ValueError("tol must be >= 0")
    a = np.asarray(activations, dtype=np.float64)
    return float(np.mean(np.abs(a) <= tol))


def nonzero_histogram(activations, bins=50, tol=1e-12):
    """Histogram (counts, bin_edges) of the entries larger than ``tol`` in
    magnitude; the companion of ``zero_fraction`` for sparsity plots."""
    a = np.ravel(np.asarray(activations, dtype=np.float64))
    nonzero = a[np.abs(a) > tol]
    if nonzero.size == 0:
        return np.zeros(bins, dtype=int), np.linspace(0.0, 1.0, bins + 1)
    counts, edges = np.histogram(nonzero, bins=bins)
    return counts, edges
