import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fixtures import flat_prediction, plateau_fixture
from vge.detect import DetectionResult, DetectorConfig, detect, flag, score, tune_tau
from vge.exceptions import LengthMismatch, NoLabels


def _flag_ref(tent, tau, q):
    """Literal scan: open a tau-point window at the first tentative point."""
    tent = list(tent)
    segs, t, n = [], 0, len(tent)
    while t < n:
        if not tent[t]:
            t += 1
            continue
        window = [i for i in range(t, min(t + tau, n)) if tent[i]]
        if len(window) < q:
            t += tau
            continue
        last = window[-1]
        nxt = last + 1
        while nxt < n and nxt - last < tau:
            if tent[nxt]:
                last = nxt
            nxt += 1
        segs.append((t, last))
        t = last + 1
    return segs


def test_score_examples():
    s, tent = score([0.0, 3.0, -6.0, 3.1], [0.0] * 4, [1.0] * 4, band_k=3.0)
    assert s == pytest.approx([0, 3, 6, 3.1], rel=1e-7)
    assert tent.tolist() == [False, False, True, True]
    s, _ = score([1.0], [0.0], [0.0])
    assert s[0] == pytest.approx(1e8)
    with pytest.raises(LengthMismatch):
        score([1.0], [0.0, 1.0], [1.0])


def test_flag_examples():
    t = np.zeros(40, bool)
    t[[2, 3, 4, 20, 30, 31]] = True
    cfg = DetectorConfig(tau_max=3, min_tentative=2)
    assert flag(t, cfg) == [(2, 4), (30, 31)]
    assert flag(t, DetectorConfig(tau_max=3, min_tentative=3)) == [(2, 4)]
    assert flag(np.zeros(10, bool), cfg) == []


@settings(max_examples=200, deadline=None)
@given(st.lists(st.booleans(), max_size=80), st.integers(1, 12), st.integers(1, 12))
def test_flag_matches_literal_scan_and_postconditions(tent, tau, q):
    if q > tau:
        q, tau = tau, q
    segs = flag(tent, DetectorConfig(tau_max=tau, min_tentative=q))
    assert segs == _flag_ref(tent, tau, q)
    prev_end = -1
    for s, e in segs:
        assert prev_end < s <= e and tent[s] and tent[e]
        idx = [i for i in range(s, e + 1) if tent[i]]
        assert len([i for i in idx if i < s + tau]) >= q
        assert all(b - a < tau for a, b in zip(idx, idx[1:]))
        prev_end = e


@settings(max_examples=100, deadline=None)
@given(st.lists(st.booleans(), max_size=60), st.integers(0, 30))
def test_translation_equivariance(tent, shift):
    cfg = DetectorConfig(tau_max=5, min_tentative=2)
    base = flag(tent, cfg)
    moved = flag([False] * shift + list(tent), cfg)
    assert moved == [(s + shift, e + shift) for s, e in base]


def test_tau_plateau():
    y, pred, truth = plateau_fixture()
    cfg = DetectorConfig(tau_max=5, min_tentative=2, tau_grid=tuple(range(1, 31)))
    tau, per_tau = tune_tau(y, pred, truth, cfg)
    f1 = [per_tau[t]["f1"] for t in range(1, 31)]
    assert tau == 5
    assert all(x <= y_ for x, y_ in zip(f1[:5], f1[1:5]))
    assert all(v == f1[4] for v in f1[4:]) and f1[4] == 1.0
    assert f1[0] == 0.0 and 0 < f1[3] < 1


def test_tune_needs_labels():
    with pytest.raises(NoLabels):
        tune_tau(np.zeros(3), flat_prediction(3), None, DetectorConfig())


def test_detect_and_json_round_trip(tmp_path):
    y, pred, _ = plateau_fixture()
    res = detect(y, pred, DetectorConfig(tau_max=5, min_tentative=2))
    assert res.segments == [(100, 112), (300, 316)]
    assert res.labels().sum() == 13 + 17
    res.to_json(tmp_path / "d.json")
    back = DetectionResult.from_json(tmp_path / "d.json")
    assert back.segments == res.segments and np.array_equal(back.scores, res.scores)


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(tau_max=2, min_tentative=3)
    with pytest.raises(ValueError):
        DetectorConfig(band_k=0)
