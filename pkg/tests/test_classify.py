import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from eegvc import classify
from eegvc.classify import (LeakageError, Standardizer, auc_score, classifier_metrics, knn_predict,
                            run_channel_experiments, split_train_test, svm_train, write_results_csv)


def test_knn_hand_cases():
    x = np.array([[0.0], [1.0], [2.0], [10.0], [11.0]])
    y = [0, 0, 0, 1, 1]
    assert knn_predict(x, y, [0.4], k=3) == (0, 0.0)
    assert knn_predict(x, y, [10.4], k=1) == (1, 1.0)
    assert knn_predict(x, y, [9.0], k=3) == (1, 2 / 3)
    # 2-2 vote: the nearest neighbour decides
    assert knn_predict(x[1:], [0, 0, 1, 1], [9.0], k=4)[0] == 1
    assert knn_predict(x[1:], [0, 0, 1, 1], [2.5], k=4)[0] == 0
    with pytest.raises(ValueError):
        knn_predict(x, y, [0.0], k=6)
    with pytest.raises(ValueError):
        knn_predict(np.empty((0, 1)), [], [0.0], k=1)


def knn_brute(x, y, q, k):
    d = [sum((a - b) ** 2 for a, b in zip(row, q)) ** 0.5 for row in x]
    order = sorted(range(len(x)), key=lambda i: (d[i], i))[:k]
    pos = sum(y[i] for i in order)
    if 2 * pos == k:
        return y[order[0]], pos / k
    return int(2 * pos > k), pos / k


@settings(max_examples=40)
@given(st.integers(0, 10_000), st.integers(1, 7))
def test_knn_matches_brute_force(seed, k):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 3))
    y = rng.integers(0, 2, size=12).tolist()
    q = rng.normal(size=3)
    assert knn_predict(x, y, q, k) == knn_brute(x.tolist(), y, q.tolist(), k)


def test_svm_separates_and_is_seeded():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(-2, 0.5, size=(30, 2)), rng.normal(2, 0.5, size=(30, 2))])
    y = np.r_[-np.ones(30), np.ones(30)]
    m = svm_train(x, y, lam=1e-2, epochs=30)
    assert (m.predict(x) == (y > 0)).all()
    m2 = svm_train(x, y, lam=1e-2, epochs=30)
    assert np.array_equal(m.weight, m2.weight) and m.bias == m2.bias
    with pytest.raises(ValueError):
        svm_train(x, np.ones(60))
    with pytest.raises(ValueError):
        svm_train(x, (y > 0).astype(int))


def test_svm_first_step_closed_form():
    # one epoch over two samples, replayed by hand in the seeded order
    x = np.array([[2.0, -1.0], [0.0, 0.0]])
    y = np.array([1.0, -1.0])
    rng = np.random.default_rng(7)
    order = rng.permutation(2)
    lam = 0.5
    w = np.zeros(3)
    xa = np.hstack([x, np.ones((2, 1))])
    for t, i in enumerate(order, start=1):
        eta = 1 / (lam * t)
        hit = y[i] * (xa[i] @ w) < 1
        w = (1 - eta * lam) * w + (eta * y[i] * xa[i] if hit else 0)
    m = svm_train(x, y, lam=lam, epochs=1, seed=7)
    np.testing.assert_allclose(np.r_[m.weight, m.bias], w, atol=1e-15)


def test_metrics_hand_case():
    r = classifier_metrics([1, 1, 0, 0, 1], [0.9, 0.8, 0.3, 0.1, 0.4], [1, 0, 0, 1, 1])
    assert (r.tp, r.fp, r.tn, r.fn) == (2, 1, 1, 1)
    assert r.accuracy == 0.6 and r.precision == 2 / 3 and r.recall == 2 / 3
    # positives 0.9, 0.1, 0.4 vs negatives 0.8, 0.3: pairs won 2 + 0 + 1 = 3 of 6
    assert r.auc == 0.5
    r = classifier_metrics([0, 0], [0.1, 0.2], [0, 0])
    assert r.precision is None and r.recall is None and r.auc is None and r.accuracy == 1.0
    with pytest.raises(ValueError):
        classifier_metrics([1], [0.5], [1, 0])


def test_auc_ties_and_extremes():
    assert auc_score([1, 2, 3, 4], [0, 0, 1, 1]) == 1.0
    assert auc_score([4, 3, 2, 1], [0, 0, 1, 1]) == 0.0
    assert auc_score([1, 1, 1, 1], [0, 1, 0, 1]) == 0.5
    assert auc_score([1, 2], [1, 1]) is None


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_auc_invariant_to_monotone_maps(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=20)
    y = np.r_[np.zeros(10), np.ones(10)].astype(int)
    a = auc_score(s, y)
    assert auc_score(np.exp(s), y) == a
    assert auc_score(3 * s - 1, y) == a
    assert auc_score(-s, y) == pytest.approx(1 - a, abs=1e-15)
    # brute force over all pairs
    wins = sum((p > n) + 0.5 * (p == n) for p in s[y == 1] for n in s[y == 0])
    assert a == pytest.approx(wins / 100, abs=1e-15)


def test_standardizer_constant_column():
    x = np.array([[1.0, 5.0], [3.0, 5.0]])
    s = Standardizer.fit(x)
    np.testing.assert_allclose(s.transform(x), [[-1, 0], [1, 0]])


def test_split_train_test_by_subject():
    groups = np.repeat(np.arange(20), 3)
    labels = (groups % 2).astype(int)
    tr, te = split_train_test(groups, labels, 0.2, seed=3)
    assert not set(groups[tr]) & set(groups[te])
    assert len(set(groups[te])) == 4 and sorted(np.r_[tr, te].tolist()) == list(range(60))
    with pytest.raises(ValueError, match="mixed"):
        split_train_test([0, 0, 1, 1], [0, 1, 0, 1])
    with pytest.raises(ValueError):
        split_train_test([0, 1, 2], [0, 1, 1])


def test_leakage_guard(monkeypatch):
    with pytest.raises(LeakageError):
        classify._guard(np.array([0, 1, 2]), np.array([2, 3]))
    classify._guard(np.array([0, 1]), np.array([2, 3]))
    # a split that hands the same rows to both sides is caught before any fitting
    monkeypatch.setattr(classify, "split_train_test", lambda *a, **k: (np.arange(8), np.arange(6, 10)))
    with pytest.raises(LeakageError):
        run_channel_experiments({"a": np.zeros((10, 2))}, [0, 1] * 5, list(range(10)))


def _dataset(seed=0, n_subjects=20, per=3, effect=5.0, n_feat=4):
    rng = np.random.default_rng(seed)
    groups = np.repeat(np.arange(n_subjects), per)
    labels = groups % 2
    x = rng.normal(size=(groups.size, n_feat))
    x[:, 0] += effect * labels
    return x, labels, groups


def test_experiments_separable_and_deterministic(tmp_path):
    x, y, g = _dataset()
    feats = {"one": x[:, :1], "all": x}
    rows = run_channel_experiments(feats, y, g, split_seed=1, svm_epochs=30)
    assert [(r.report.config, r.report.classifier) for r in rows] == [
        ("one", "KNN"), ("one", "SVM"), ("all", "KNN"), ("all", "SVM")]
    for r in rows:
        assert r.report.accuracy >= 0.9 and r.report.auc >= 0.95
        assert r.n_train + r.n_test == 60 and r.seed == 1
    assert rows[3].n_selected >= 1
    write_results_csv(rows, tmp_path / "a.csv")
    write_results_csv(run_channel_experiments(feats, y, g, split_seed=1, svm_epochs=30), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    table = list(csv.reader(open(tmp_path / "a.csv")))
    assert table[0] == classify.RESULTS_HEADER and len(table) == 5


def test_experiments_ignore_test_rows_when_fitting():
    x, y, g = _dataset(seed=2)
    rows = run_channel_experiments({"a": x}, y, g, split_seed=0, svm_epochs=20)
    tr, te = split_train_test(g, y, 0.2, 0)
    x2 = x.copy()
    x2[te] = 1e6 * np.random.default_rng(9).normal(size=(te.size, x.shape[1]))
    # changing only test rows can change predictions but not the fitted scaler or selection
    rows2 = run_channel_experiments({"a": x2}, y, g, split_seed=0, svm_epochs=20)
    assert rows[0].n_selected == rows2[0].n_selected
    assert rows[0].n_train == rows2[0].n_train


def test_results_csv_undefined(tmp_path):
    rep = classifier_metrics([0, 0], [0.1, 0.2], [0, 0], "c", "KNN")
    write_results_csv([classify.ExperimentRow(rep, 5, 2, 0, 1)], tmp_path / "r.csv")
    row = list(csv.reader(open(tmp_path / "r.csv")))[1]
    assert row == ["c", "KNN", "1.000000", "undefined", "undefined", "undefined", "5", "2", "0"]


def test_metric_hand_cases_exact():
    r = classifier_metrics([1, 1, 0, 0], [1, 1, 0, 0], [1, 0, 0, 1])
    assert (r.tp, r.fp, r.tn, r.fn) == (1, 1, 1, 1)
    assert (r.accuracy, r.precision, r.recall) == (0.5, 0.5, 0.5)
    assert auc_score([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0]) == 1.0
    assert auc_score([0.9, 0.1, 0.8, 0.2], [1, 0, 0, 1]) == 0.75


def test_svm_one_dimensional_pair():
    m = svm_train([[1.0], [-1.0]], [1, -1], lam=1e-2, epochs=50)
    assert m.weight[0] > 0
    assert m.predict([[1.0], [-1.0]]).tolist() == [1, 0]


def test_svm_separable_blobs_reach_full_training_accuracy():
    rng = np.random.default_rng(11)
    y = np.r_[np.ones(100), -np.ones(100)]
    x = rng.normal(scale=0.3, size=(200, 2))
    x[:, 0] += 2.5 * y  # gap between the classes well over 2
    m = svm_train(x, y, lam=1e-2, epochs=100, seed=3)
    assert (m.predict(x) == (y > 0)).all()


@settings(max_examples=20)
@given(st.integers(0, 10_000))
def test_svm_label_negation_mirrors_decision(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(30, 3))
    y = np.where(rng.normal(size=30) + x[:, 0] > 0, 1.0, -1.0)
    if abs(y.sum()) == 30:
        y[0] = -y[0]
    a = svm_train(x, y, epochs=5, seed=seed).decision_function(x)
    b = svm_train(x, -y, epochs=5, seed=seed).decision_function(x)
    np.testing.assert_array_equal(a, -b)


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(1, 9))
def test_knn_permutation_invariant_and_score_grid(seed, k):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(15, 2))
    y = rng.integers(0, 2, size=15)
    q = rng.normal(size=2)
    perm = rng.permutation(15)
    label, score = knn_predict(x, y, q, k)
    assert knn_predict(x[perm], y[perm], q, k) == (label, score)
    assert score * k == pytest.approx(round(score * k)) and 0 <= score <= 1


def test_identical_configurations_give_identical_reports():
    x, y, g = _dataset(seed=4)
    rows = run_channel_experiments({"a": x, "b": x.copy()}, y, g, svm_epochs=10)
    for ra, rb in zip(rows[:2], rows[2:]):
        assert (ra.report.accuracy, ra.report.auc, ra.report.tp, ra.report.fp) == \
               (rb.report.accuracy, rb.report.auc, rb.report.tp, rb.report.fp)
