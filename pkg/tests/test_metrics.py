import math

import numpy as np
import pytest

from asni.linalg import make_rng
from asni.metrics import (
    MetricsRecord,
    accuracy,
    correlation_norm,
    nonzero_histogram,
    read_metrics_csv,
    read_run_meta,
    silhouette,
    write_metrics_csv,
    zero_fraction,
)


def loop_accuracy(pred, onehot):
    hits = 0
    for i in range(pred.shape[0]):
        best = 0
        for j in range(1, pred.shape[1]):
            if pred[i, j] > pred[i, best]:
                best = j
        hits += int(best == int(np.argmax(onehot[i])))
    return hits / pred.shape[0]


def loop_correlation_norm(a):
    n, d = a.shape
    mean = a.mean(axis=0)
    cov = np.zeros((d, d))
    for i in range(n):
        diff = a[i] - mean
        cov += np.outer(diff, diff)
    cov /= n
    t = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            if cov[i, i] < 1e-12 or cov[j, j] < 1e-12:
                t[i, j] = 1.0 if i == j else 0.0
            else:
                t[i, j] = cov[i, j] / math.sqrt(cov[i, i] * cov[j, j])
    return math.sqrt(np.sum(t * t))


class TestAccuracy:
    def test_perfect(self, rng):
        y = np.eye(5)[rng.integers(0, 5, size=30)]
        assert accuracy(y * 10.0, y) == 1.0

    def test_uniform_logits_tie_to_class_zero(self):
        preds = np.zeros((40, 10))
        labels = np.eye(10)[np.array([0] * 13 + list(range(1, 10)) * 3)]
        assert accuracy(preds, labels) == pytest.approx(13 / 40)

    def test_matches_loop_oracle(self, rng):
        preds = rng.standard_normal((100, 7))
        labels = np.eye(7)[rng.integers(0, 7, size=100)]
        assert accuracy(preds, labels) == pytest.approx(loop_accuracy(preds, labels))

    def test_binary_sign_match(self):
        preds = np.array([0.3, -0.2, 0.0, 1.4])
        labels = np.array([1.0, -1.0, -1.0, -1.0])
        # zero prediction counts as the negative class
        assert accuracy(preds, labels) == pytest.approx(0.75)

    def test_integer_labels_accepted(self, rng):
        preds = rng.standard_normal((50, 4))
        labels = rng.integers(0, 4, size=50)
        onehot = np.eye(4)[labels]
        assert accuracy(preds, labels) == accuracy(preds, onehot)


class TestCorrelationNorm:
    def test_exactly_uncorrelated_columns(self):
        # empirically orthogonal, centered columns: T = I, norm = sqrt(d)
        a = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]])
        assert correlation_norm(a) == pytest.approx(np.sqrt(2), rel=1e-12)

    def test_perfectly_correlated_pair(self, rng):
        col = rng.standard_normal(200)
        a = np.column_stack([col, 2.0 * col])
        assert correlation_norm(a) == pytest.approx(2.0, rel=1e-12)

    def test_matches_loop_oracle(self, rng):
        a = rng.standard_normal((200, 8)) * rng.uniform(0.5, 3.0, size=8)
        assert correlation_norm(a) == pytest.approx(loop_correlation_norm(a), abs=1e-12)

    def test_dead_unit_no_nan(self, rng):
        a = rng.standard_normal((50, 3))
        a[:, 1] = 0.0
        value = correlation_norm(a)
        assert np.isfinite(value)
        assert value >= 1.0

    def test_positive_affine_invariance(self, rng):
        a = rng.standard_normal((100, 5))
        scaled = a * np.array([0.1, 2.0, 5.0, 1.0, 3.3]) + np.array([1, -2, 0, 4, 9])
        assert correlation_norm(scaled) == pytest.approx(correlation_norm(a), rel=1e-9)

    def test_range(self, rng):
        # diagonal of T is pinned to 1, so sqrt(d) <= ||T||_F <= d always
        for _ in range(10):
            d = int(rng.integers(2, 6))
            a = rng.standard_normal((40, d))
            v = correlation_norm(a)
            assert np.sqrt(d) - 1e-12 <= v <= d + 1e-12

    def test_wide_sample_tends_to_sqrt_d(self):
        rng = make_rng(97)
        a = rng.standard_normal((200_000, 4))
        assert abs(correlation_norm(a) - 2.0) < 0.01


class TestSilhouette:
    def test_far_separated_tight_clusters(self, rng):
        a = rng.standard_normal((40, 2)) * 0.1
        b = rng.standard_normal((40, 2)) * 0.1 + 100.0
        pts = np.vstack([a, b])
        labels = np.array([0] * 40 + [1] * 40)
        assert silhouette(pts, labels) > 0.9

    def test_hand_computed_four_points(self):
        pts = np.array([[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 1.0]])
        labels = np.array([0, 0, 1, 1])
        # every point: a = 1, b = (10 + sqrt(101))/2, s = 1 - a/b
        b = (10.0 + np.sqrt(101.0)) / 2.0
        assert silhouette(pts, labels) == pytest.approx(1.0 - 1.0 / b, abs=1e-12)

    def test_label_permutation_invariance(self, rng):
        pts = rng.standard_normal((60, 3))
        labels = rng.integers(0, 3, size=60)
        remapped = (labels + 1) % 3
        assert silhouette(pts, labels) == pytest.approx(silhouette(pts, remapped))

    def test_single_cluster_rejected(self, rng):
        with pytest.raises(ValueError):
            silhouette(rng.standard_normal((10, 2)), np.zeros(10))

    def test_singleton_cluster_scores_zero(self):
        pts = np.array([[0.0], [0.1], [5.0]])
        labels = np.array([0, 0, 1])
        # the singleton contributes 0; the pair contributes (b - a)/b each
        s0 = (5.0 - 0.1) / 5.0
        s1 = (4.9 - 0.1) / 4.9
        assert silhouette(pts, labels) == pytest.approx((s0 + s1) / 3.0, abs=1e-12)

    def test_matches_sklearn(self, rng):
        from sklearn.metrics import silhouette_score

        pts = rng.standard_normal((80, 4))
        labels = rng.integers(0, 4, size=80)
        assert silhouette(pts, labels) == pytest.approx(
            silhouette_score(pts, labels), abs=1e-10)

    def test_bounded(self, rng):
        for _ in range(5):
            pts = rng.standard_normal((30, 2))
            labels = rng.integers(0, 3, size=30)
            assert -1.0 <= silhouette(pts, labels) <= 1.0


class TestZeroFraction:
    def test_all_zero(self):
        assert zero_fraction(np.zeros((5, 5))) == 1.0

    def test_all_ones(self):
        assert zero_fraction(np.ones((5, 5))) == 0.0

    def test_relu_of_standard_normal(self):
        rng = make_rng(101)
        acts = np.maximum(rng.standard_normal((1000, 100)), 0.0)
        assert abs(zero_fraction(acts) - 0.5) <= 0.01

    def test_histogram_counts_nonzeros(self, rng):
        acts = np.maximum(rng.standard_normal((100, 10)), 0.0)
        counts, edges = nonzero_histogram(acts, bins=20)
        assert counts.sum() == np.sum(acts > 1e-12)
        assert len(edges) == 21


class TestRecordsCsv:
    def test_roundtrip_with_meta(self, tmp_path):
        records = [
            MetricsRecord(iteration=10, train_loss=0.5, test_loss=0.6,
                          test_accuracy=0.9, corr_norm_l1=3.2, zero_frac_l1=0.4),
            MetricsRecord(iteration=20, train_loss=0.4, test_loss=0.55,
                          test_accuracy=0.92, silhouette=0.7),
        ]
        path = tmp_path / "run.csv"
        write_metrics_csv(records, path, preamble=["config_hash=abc", "seed=3"])
        meta = read_run_meta(path)
        assert meta == {"config_hash": "abc", "seed": "3"}
        back = read_metrics_csv(path)
        assert back[0].iteration == 10
        assert back[0].corr_norm_l1 == 3.2
        assert math.isnan(back[0].silhouette)
        assert back[1].silhouette == 0.7

    def test_header_order(self, tmp_path):
        path = tmp_path / "run.csv"
        write_metrics_csv([], path)
        assert (path.read_text().splitlines()[0]
                == "iteration,train_loss,test_loss,test_accuracy,"
                   "corr_norm_l1,corr_norm_l2,zero_frac_l1,zero_frac_l2,silhouette")
