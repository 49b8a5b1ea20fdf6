import numpy as np
import pytest

from mrifoundry.errors import DataError, LabelError, ShapeError
from mrifoundry.metrics import accuracy, confusion, dice, roc_auc


def dice_oracle(pred, gt, k):
    p = {tuple(i) for i in np.argwhere(pred == k)}
    g = {tuple(i) for i in np.argwhere(gt == k)}
    if not p and not g:
        return 1.0
    return 2 * len(p & g) / (len(p) + len(g))


def auc_pair_counting(scores, labels):
    """Mann-Whitney with half-credit ties, by exhaustive pair enumeration."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else (0.5 if p == n else 0.0)
    return total / (len(pos) * len(neg))


class TestDice:
    def test_perfect(self):
        arr = np.zeros((4, 4, 4), int)
        arr[1:3, 1:3, 1:3] = 1
        assert dice(arr, arr, 1) == 1.0

    def test_disjoint(self):
        a = np.zeros((4, 4, 4), int)
        b = np.zeros((4, 4, 4), int)
        a[0, 0, 0] = 1
        b[3, 3, 3] = 1
        assert dice(a, b, 1) == 0.0

    def test_hand_counted(self):
        pred = np.zeros((4, 4, 4), int)
        gt = np.zeros((4, 4, 4), int)
        pred[0, 0, :4] = 1
        pred[1, 0, :4] = 1  # |P| = 8
        gt[0, 0, :4] = 1
        gt[1, 1, :2] = 1  # |G| = 6, overlap = 4
        assert dice(pred, gt, 1) == pytest.approx(2 * 4 / (8 + 6))

    def test_empty_empty_convention(self):
        z = np.zeros((2, 2, 2), int)
        assert dice(z, z, 3) == 1.0

    def test_symmetry_and_range(self, rng):
        for _ in range(30):
            a = rng.integers(0, 3, size=(8, 8, 8))
            b = rng.integers(0, 3, size=(8, 8, 8))
            for k in range(3):
                d = dice(a, b, k)
                assert d == dice(b, a, k)
                assert 0.0 <= d <= 1.0

    def test_matches_oracle(self, rng):
        for _ in range(50):
            a = rng.integers(0, 3, size=(8, 8, 8))
            b = rng.integers(0, 3, size=(8, 8, 8))
            k = int(rng.integers(0, 3))
            assert dice(a, b, k) == pytest.approx(dice_oracle(a, b, k), abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            dice(np.zeros((2, 2, 2), int), np.zeros((2, 2, 3), int), 0)


class TestAccuracy:
    def test_perfect(self):
        assert accuracy([0, 1, 2], [0, 1, 2]) == 1.0

    def test_binary_hand_counts(self):
        # TP=3, TN=2, FP=1, FN=4 -> (3+2)/10
        labels = [1] * 3 + [0] * 2 + [0] * 1 + [1] * 4
        preds = [1] * 3 + [0] * 2 + [1] * 1 + [0] * 4
        assert accuracy(preds, labels) == pytest.approx(0.5)

    def test_all_wrong(self):
        assert accuracy([1, 0], [0, 1]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            accuracy([], [])


class TestConfusion:
    def test_perfect_is_diagonal(self):
        mat = confusion([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert np.array_equal(mat, np.diag([1, 2, 1]))

    def test_hand_case(self):
        mat = confusion(preds=[0, 1, 1], labels=[0, 0, 1], n_classes=2)
        assert np.array_equal(mat, [[1, 1], [0, 1]])

    def test_trace_equals_accuracy(self, rng):
        for _ in range(100):
            n = int(rng.integers(1, 30))
            k = int(rng.integers(2, 5))
            preds = rng.integers(0, k, size=n)
            labels = rng.integers(0, k, size=n)
            mat = confusion(preds, labels, k)
            assert mat.sum() == n
            assert np.trace(mat) / n == pytest.approx(accuracy(preds, labels))

    def test_out_of_range_label(self):
        with pytest.raises(LabelError):
            confusion([0, 3], [0, 1], 2)


class TestRocAuc:
    def test_perfect_separation(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_tied_is_half(self):
        assert roc_auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == pytest.approx(0.5)

    def test_hand_listed_pairs(self):
        scores = [0.9, 0.8, 0.8, 0.7, 0.6, 0.55, 0.54, 0.4, 0.3, 0.2]
        labels = [1, 1, 0, 1, 0, 1, 0, 0, 1, 0]
        assert roc_auc(scores, labels) == pytest.approx(auc_pair_counting(scores, labels), abs=1e-12)

    def test_matches_pair_counting(self, rng):
        for _ in range(50):
            n = int(rng.integers(4, 25))
            scores = np.round(rng.uniform(size=n), 2)  # force some ties
            labels = rng.integers(0, 2, size=n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert roc_auc(scores, labels) == pytest.approx(
                auc_pair_counting(scores.tolist(), labels.tolist()), abs=1e-12
            )

    def test_monotone_transform_invariance(self, rng):
        scores = rng.normal(size=20)
        labels = rng.integers(0, 2, size=20)
        labels[0], labels[1] = 0, 1
        base = roc_auc(scores, labels)
        assert roc_auc(np.exp(scores), labels) == pytest.approx(base, abs=1e-12)
        assert roc_auc(3 * scores - 7, labels) == pytest.approx(base, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            roc_auc([0.1, 0.2], [1, 1])

    def test_non_binary_rejected(self):
        with pytest.raises(LabelError):
            roc_auc([0.1, 0.2], [0, 2])
