import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfgcn.metrics import (binary_rates, confusion_matrix, evaluate, f2_score, predict_labels, roc_auc_ovr,
                           roc_curve, trapezoid_auc)
from oracles import mann_whitney_auc


def direct_rates(tp, fp, fn, tn):
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    s = tn / (tn + fp) if tn + fp else 0.0
    f2 = 5 * p * r / (4 * p + r) if 4 * p + r else 0.0
    return p, r, s, f2


class TestRates:
    def test_known_counts(self):
        r = binary_rates(3, 1, 1, 5)
        assert r["precision"] == 0.75 and r["recall"] == 0.75
        assert r["specificity"] == pytest.approx(5 / 6, abs=1e-12)
        assert r["f2"] == pytest.approx(0.75, abs=1e-12)

    def test_f2_reference_pair(self):
        assert f2_score(0.88, 0.96) == pytest.approx(0.9428, abs=1e-4)

    def test_random_configurations_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            tp, fp, fn, tn = (int(x) for x in rng.integers(0, 50, 4))
            r = binary_rates(tp, fp, fn, tn)
            assert (r["precision"], r["recall"], r["specificity"], r["f2"]) == direct_rates(tp, fp, fn, tn)

    @settings(max_examples=200)
    @given(st.floats(0, 1), st.floats(0, 1))
    def test_f2_between(self, p, r):
        f = f2_score(p, r)
        assert min(p, r) - 1e-12 <= f <= max(p, r) + 1e-12

    @settings(max_examples=50)
    @given(st.floats(0.01, 1))
    def test_f2_equal_inputs(self, p):
        assert f2_score(p, p) == pytest.approx(p, rel=1e-12)


class TestEvaluate:
    def test_all_correct(self):
        y = np.array([0, 1, 2, 1, 0, 2])
        rep = evaluate(y, y, np.eye(3)[y])
        assert rep.accuracy == 1.0
        assert all(v == 1.0 for v in rep.weighted.values())
        assert all(r.auc == 1.0 for r in rep.roc.values())

    @pytest.mark.parametrize("seed", range(20))
    def test_weighted_recall_is_accuracy(self, seed):
        rng = np.random.default_rng(seed)
        y, p = rng.integers(0, 3, 40), rng.integers(0, 3, 40)
        rep = evaluate(y, p, n_classes=3)
        assert rep.weighted["recall"] == pytest.approx(rep.accuracy, abs=1e-12)

    def test_specificity_is_recall_of_complement(self):
        rng = np.random.default_rng(1)
        y, p = rng.integers(0, 3, 60), rng.integers(0, 3, 60)
        rep = evaluate(y, p, n_classes=3)
        for c in range(3):
            not_c = (y != c)
            pred_not_c = (p != c)
            rec = np.sum(not_c & pred_not_c) / np.sum(not_c)
            assert rep.per_class[c]["specificity"] == pytest.approx(rec, abs=1e-12)

    def test_absent_class_flagged(self):
        rep = evaluate([0, 0, 1], [0, 1, 1], np.array([[0.9, 0.1, 0], [0.4, 0.6, 0], [0.2, 0.8, 0]]), n_classes=3)
        assert rep.per_class[2]["recall"] == 0.0
        assert any("class 2" in f and "recall" in f for f in rep.flags)
        assert rep.roc[2].auc is None

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            evaluate([0, 1], [0])

    def test_confusion_counts(self):
        cm = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 0], 3)
        assert cm.tolist() == [[1, 1, 0], [0, 1, 0], [1, 0, 0]]

    def test_report_serializes(self):
        import json
        rep = evaluate([0, 1, 1], [0, 1, 0], np.array([[0.7, 0.3], [0.2, 0.8], [0.6, 0.4]]))
        d = json.loads(json.dumps(rep.to_dict()))
        assert d["confusion"] == [[1, 0], [1, 1]]
        assert {r["class"] for r in rep.roc_rows()} == {0, 1}

    def test_argmax_ties_lowest(self):
        assert predict_labels([[0.5, 0.5], [0.2, 0.8], [1 / 3, 1 / 3 + 1e-17]]).tolist() == [0, 1, 0]


class TestRoc:
    def test_perfect(self):
        y = np.array([0, 0, 1, 1])
        fpr, tpr, _ = roc_curve(y == 1, [0.1, 0.2, 0.8, 0.9])
        assert trapezoid_auc(fpr, tpr) == 1.0

    def test_inverted(self):
        y = np.array([0, 0, 1, 1])
        fpr, tpr, _ = roc_curve(y == 1, [0.9, 0.8, 0.2, 0.1])
        assert trapezoid_auc(fpr, tpr) == 0.0

    def test_starts_at_origin_ends_at_one(self):
        fpr, tpr, thr = roc_curve([True, False, True], [0.3, 0.5, 0.9])
        assert (fpr[0], tpr[0], thr[0]) == (0.0, 0.0, np.inf)
        assert (fpr[-1], tpr[-1]) == (1.0, 1.0)

    @pytest.mark.parametrize("seed", range(10))
    def test_mann_whitney(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 2, 50).astype(bool)
        y[0], y[1] = True, False
        s = np.round(rng.random(50), 1)  # rounding forces ties
        fpr, tpr, _ = roc_curve(y, s)
        assert abs(trapezoid_auc(fpr, tpr) - mann_whitney_auc(s[y], s[~y])) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_invariance(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.integers(0, 3, 30)
        s = rng.dirichlet(np.ones(3), 30)
        a = roc_auc_ovr(y, s)
        b = roc_auc_ovr(y, np.exp(3 * s) + 7)
        for c in range(3):
            assert (a[c].auc is None and b[c].auc is None) or a[c].auc == pytest.approx(b[c].auc, abs=1e-12)

    def test_needs_two_columns(self):
        with pytest.raises(ValueError):
            roc_auc_ovr([0, 1], np.ones((2, 1)))
