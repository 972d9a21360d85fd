import numpy as np
import pytest

from vge.dataset import (
    ChannelData,
    SignalScaler,
    excluded_signals,
    fit_scaler,
    is_excluded,
    load_channel,
    make_windows,
)
from vge.exceptions import ColumnMismatch, EmptyInput, MissingFile, SeriesTooShort, UnlabeledChannel
from vge.npy_io import parse_labels_csv, save_npy


def test_exclusion_list():
    ex = excluded_signals()
    assert len(ex) == 20
    assert "M6" in ex and "A-2" not in ex
    assert is_excluded("M-6") and not is_excluded("A-2")


def _layout(tmp_path, cid, train, test):
    for split, m in (("train", train), ("test", test)):
        (tmp_path / split).mkdir(exist_ok=True)
        save_npy(tmp_path / split / f"{cid}.npy", m)


def test_load_channel(tmp_path):
    rng = np.random.default_rng(0)
    _layout(tmp_path, "A-2", rng.normal(size=(30, 3)), rng.normal(size=(20, 3)))
    labels = parse_labels_csv('A-2,SMAP,"[[5, 9]]",20\n')
    ch = load_channel(tmp_path, "A-2", labels)
    assert ch.target_col == 0 and ch.anomaly_segments == ((5, 9),)
    assert ch.test_labels().sum() == 5


def test_load_excluded_channel_succeeds(tmp_path):
    _layout(tmp_path, "M-6", np.ones((5, 2)), np.ones((4, 2)))
    ch = load_channel(tmp_path, "M-6", parse_labels_csv('M-6,MSL,"[[0, 1]]",4\n'))
    assert is_excluded(ch.channel_id)


def test_load_errors(tmp_path):
    _layout(tmp_path, "A-1", np.ones((10, 3)), np.ones((8, 4)))
    labels = parse_labels_csv('A-1,SMAP,"[[1, 2]]",8\n')
    with pytest.raises(ColumnMismatch):
        load_channel(tmp_path, "A-1", labels)
    with pytest.raises(UnlabeledChannel):
        load_channel(tmp_path, "B-1", labels)
    with pytest.raises(MissingFile):
        load_channel(tmp_path, "C-1", parse_labels_csv('C-1,SMAP,"[]",8\n'))


def test_channel_invariants():
    with pytest.raises(ColumnMismatch):
        ChannelData("x", np.ones((3, 2)), np.ones((3, 1)))
    with pytest.raises(ValueError):
        ChannelData("x", np.ones((3, 2)), np.ones((3, 2)), ((1, 5),))


def test_scaler_endpoints_and_degenerate():
    s = fit_scaler(np.array([[0.0, 5.0], [10.0, 5.0], [5.0, 5.0]]))
    out = s.apply(np.array([[0.0, 5.0], [10.0, 5.0]]))
    assert np.array_equal(out, [[-1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(EmptyInput):
        fit_scaler(np.empty((0, 2)))


def test_scaler_roundtrip_and_no_leakage():
    rng = np.random.default_rng(3)
    train, test = rng.normal(size=(50, 4)), rng.normal(size=(40, 4))
    est = SignalScaler().fit(train)
    assert np.allclose(est.inverse_transform(est.transform(test)), test, atol=1e-12, rtol=0)
    before = est.scaler_.to_dict()
    est.transform(test * 1000)
    assert est.scaler_.to_dict() == before


def test_windows_index_arithmetic():
    series = np.arange(10.0).reshape(5, 2)
    w = make_windows(series, 3, 1)
    assert len(w) == 2
    assert np.array_equal(w.inputs[0], series[0:3]) and w.targets[0] == series[3, 0]
    with pytest.raises(SeriesTooShort):
        make_windows(series[:3], 3, 1)


@pytest.mark.parametrize("m", [1, 2, 5])
@pytest.mark.parametrize("horizon", [1, 2, 4])
def test_windows_match_brute_force(m, horizon):
    series = np.random.default_rng(m * 10 + horizon).normal(size=(17, 3))
    w = make_windows(series, m, horizon, target_col=1)
    B = 17 - m - horizon + 1
    assert len(w) == B
    for b in range(B):
        assert np.array_equal(w.inputs[b], series[b:b + m])
        assert w.targets[b] == series[b + m + horizon - 1, 1]
