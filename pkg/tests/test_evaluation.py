import numpy as np
import pytest

from oracles import confusion_ref
from vge.evaluation import (REFERENCE_SCORES, Confusion, aggregate, confusion,
                            confusion_from_labels, f1_harmonic, labels_to_segments, metrics,
                            point_adjust, segments_to_labels, write_report_rows)
from vge.exceptions import AllExcluded, SegmentOutOfRange


def test_worked_example():
    c = confusion([(2, 5)], [(4, 8)], 10)
    assert c == Confusion(tp=2, fp=2, fn=3, tn=3)
    m = metrics(c)
    assert (m.precision, m.recall, m.accuracy) == (0.5, 0.4, 0.5)
    assert m.f1 == pytest.approx(4 / 9, rel=1e-15)


def test_degenerate_metrics():
    assert metrics(Confusion(tn=5)).f1 == 0.0
    assert metrics(Confusion()).accuracy == 0.0
    assert f1_harmonic(0.0, 1.0) == 0.0


def test_confusion_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(1, 60))
        pred = labels_to_segments(rng.random(n) < 0.3)
        true = labels_to_segments(rng.random(n) < 0.3)
        c = confusion(pred, true, n)
        assert (c.tp, c.fp, c.fn, c.tn) == confusion_ref(pred, true, n)


def test_harmonic_form_equals_closed_form():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(10_000):
        tp, fp, fn, tn = (int(v) for v in rng.integers(0, 1000, 4))
        m = metrics(Confusion(tp, fp, fn, tn))
        p, r = m.precision, m.recall
        ref = 2 * p * r / (p + r) if p + r else 0.0
        worst = max(worst, abs(m.f1 - ref))
    assert worst < 1e-12


def test_micro_aggregation_equals_pooling():
    rng = np.random.default_rng(2)
    per, all_pred, all_true = [], [], []
    for i in range(6):
        n = int(rng.integers(5, 50))
        p, t = rng.random(n) < 0.2, rng.random(n) < 0.25
        per.append((f"X-{i}", confusion_from_labels(p, t), float(i)))
        all_pred.append(p)
        all_true.append(t)
    pooled = metrics(confusion_from_labels(np.concatenate(all_pred), np.concatenate(all_true)))
    agg = aggregate(per)
    assert (agg.precision, agg.recall, agg.f1, agg.accuracy) == \
        (pooled.precision, pooled.recall, pooled.f1, pooled.accuracy)
    assert agg.mse == 2.5


def test_exclusions():
    c = Confusion(1, 0, 0, 1)
    assert aggregate([("P-10", c, None), ("A-2", Confusion(0, 1, 0, 0), None)]).precision == 0.0
    with pytest.raises(AllExcluded):
        aggregate([("M-6", c, None)])


def test_segments_and_labels():
    lab = segments_to_labels([(0, 1), (4, 4)], 6)
    assert lab.tolist() == [True, True, False, False, True, False]
    assert labels_to_segments(lab) == [(0, 1), (4, 4)]
    assert labels_to_segments([]) == []
    with pytest.raises(SegmentOutOfRange):
        segments_to_labels([(3, 6)], 6)


def test_point_adjust():
    truth = np.array([0, 1, 1, 1, 0, 1, 1], bool)
    pred = np.array([0, 0, 1, 0, 0, 0, 0], bool)
    assert point_adjust(pred, truth).tolist() == [False, True, True, True, False, False, False]
    assert confusion([(2, 2)], [(1, 3), (5, 6)], 7, adjust=True) == Confusion(3, 0, 2, 2)


def test_reference_scores():
    assert REFERENCE_SCORES["SMAP"] == {"f1": 0.92, "accuracy": 0.92, "precision": 0.89,
                                        "recall": 0.92, "mse": 0.02}
    assert REFERENCE_SCORES["MSL"] == {"f1": 0.84, "accuracy": 0.79, "precision": 0.80,
                                       "recall": 0.89, "mse": 0.09}


def test_report_rows(tmp_path):
    rows = [{"method": "VGE", "dataset": "SMAP", "accuracy": 0.9, "precision": 0.8,
             "recall": 0.7, "extra": 1}]
    write_report_rows(rows, tmp_path / "r.csv", tmp_path / "r.json")
    assert (tmp_path / "r.csv").read_text().splitlines()[0] == "method,dataset,accuracy,precision,recall"
