import numpy as np
import pytest

from roca.config import SeriesSpec
from roca.data import (
    AugmentationParams,
    ContaminationPlan,
    DataError,
    RawSeries,
    WindowedDataset,
    augment,
    fingerprint,
    fit_norm_stats,
    ingest,
    inject_contamination,
    load_windowed,
    make_windows,
    normalize,
    save_windowed,
    split_validation,
)

RNG = np.random.default_rng(7)


def test_raw_series_validation():
    RawSeries(np.zeros(10))
    with pytest.raises(DataError):
        RawSeries(np.array([1.0, np.nan, 2.0]))
    with pytest.raises(DataError):
        RawSeries(np.zeros((5, 2)), np.zeros(4))
    with pytest.raises(DataError):
        RawSeries(np.zeros(5), np.array([0, 1, 2, 0, 0]))
    with pytest.raises(DataError):
        RawSeries(np.zeros((0, 1)))


def test_ingest_forward_fill():
    vals = np.array([np.nan, 1.0, np.nan, np.nan, 4.0])
    with pytest.raises(DataError):
        ingest(vals)
    s = ingest(vals, forward_fill=True)
    assert np.allclose(s.values[:, 0], [1.0, 1.0, 1.0, 1.0, 4.0])
    with pytest.raises(DataError, match="no finite values"):
        ingest(np.full(4, np.nan), forward_fill=True)


def test_normalize_train_stats():
    raw = RawSeries(RNG.normal(5.0, 3.0, size=(500, 2)))
    out, stats = normalize(raw)
    assert np.abs(out.values.mean(axis=0)).max() < 1e-9
    assert np.abs(out.values.std(axis=0) - 1.0).max() < 1e-9
    # applying train stats to a different stream does NOT re-center it
    other = RawSeries(np.full((50, 2), 100.0))
    shifted, _ = normalize(other, stats)
    assert shifted.values.mean() > 10  # still far from 0: train stats were used


def test_normalize_constant_dimension_warning():
    vals = np.stack([np.arange(20.0), np.full(20, 3.0)], axis=1)
    out, stats = normalize(RawSeries(vals))
    assert stats.constant_dims.tolist() == [False, True]
    assert len(stats.warnings) == 1
    # constant dim centered but unscaled
    assert np.allclose(out.values[:, 1], 0.0)
    with pytest.raises(DataError):
        fit_norm_stats(RawSeries(np.zeros(1)))


def test_make_windows_arithmetic():
    spec = SeriesSpec("w", 1, 16, 16)
    ds = make_windows(RawSeries(np.arange(128.0)), spec)
    assert len(ds) == 8  # (128-16)//16 + 1
    assert ds.windows.shape == (8, 16, 1)
    assert ds.origin_index.tolist() == [0, 16, 32, 48, 64, 80, 96, 112]
    assert np.allclose(ds.windows[3, :, 0], np.arange(48.0, 64.0))
    # overlapping stride
    ds2 = make_windows(RawSeries(np.arange(64.0)), SeriesSpec("w", 1, 16, 8))
    assert len(ds2) == 7
    assert ds2.origin_index.tolist() == [0, 8, 16, 24, 32, 40, 48]


def test_make_windows_any_point_label_rule():
    labels = np.zeros(64, dtype=np.int8)
    labels[33] = 1  # second window of stride 16, window 2 covers 32..47
    ds = make_windows(RawSeries(np.zeros(64), labels), SeriesSpec("w", 1, 16, 16))
    assert ds.window_labels.tolist() == [0, 0, 1, 0]


def test_make_windows_errors():
    with pytest.raises(DataError, match="shorter than one window"):
        make_windows(RawSeries(np.zeros(10)), SeriesSpec("w", 1, 16, 16))
    with pytest.raises(DataError, match="dim"):
        make_windows(RawSeries(np.zeros((40, 2))), SeriesSpec("w", 1, 16, 16))


def _toy_windows(n=10, length=8, dim=1, labels=None):
    vals = RNG.normal(size=(n, length, dim))
    return WindowedDataset(vals, labels, np.arange(n) * length)


def test_augment_order_and_labels():
    labels = np.array([0, 1, 0, 0, 1, 0, 0, 0, 0, 0], dtype=np.int8)
    ds = _toy_windows(labels=labels)
    out = augment(ds, AugmentationParams(jitter_sigma=0.05), np.random.default_rng(0))
    assert len(out) == 30
    # first third is the originals, bit for bit
    assert np.array_equal(out.windows[:10], ds.windows)
    assert np.array_equal(out.window_labels, np.tile(labels, 3))
    assert np.array_equal(out.origin_index, np.tile(ds.origin_index, 3))
    # jittered copies differ, scaled copies are per-window multiples
    assert not np.allclose(out.windows[10:20], ds.windows)
    ratios = out.windows[20:30] / ds.windows
    per_window = ratios.reshape(10, -1)
    assert np.allclose(per_window, per_window[:, :1], atol=1e-12)
    assert (per_window[:, 0] >= 0.9 - 1e-12).all() and (per_window[:, 0] <= 1.1 + 1e-12).all()


def test_augment_determinism_and_zero_sigma():
    ds = _toy_windows()
    a = augment(ds, AugmentationParams(), np.random.default_rng(42))
    b = augment(ds, AugmentationParams(), np.random.default_rng(42))
    assert np.array_equal(a.windows, b.windows)
    c = augment(ds, AugmentationParams(), np.random.default_rng(43))
    assert not np.array_equal(a.windows, c.windows)
    z = augment(ds, AugmentationParams(jitter_sigma=0.0), np.random.default_rng(0))
    assert np.array_equal(z.windows[10:20], ds.windows)


def test_contamination_count_unlabeled():
    ds = _toy_windows(n=37)
    out, mask = inject_contamination(ds, ContaminationPlan(0.1), np.random.default_rng(1))
    assert mask.sum() == 4  # round(3.7) half away from zero
    changed = ~np.all(out.windows == ds.windows, axis=(1, 2))
    assert np.array_equal(changed, mask)
    assert np.array_equal(out.window_labels.astype(bool), mask)


def test_contamination_count_follows_labeled_anomalies():
    labels = np.zeros(40, dtype=np.int8)
    labels[:10] = 1  # 10 anomalous -> round(0.5*10)=5 injected into the clean 30
    ds = _toy_windows(n=40, labels=labels)
    out, mask = inject_contamination(ds, ContaminationPlan(0.5), np.random.default_rng(2))
    assert mask.sum() == 5
    assert not mask[:10].any()  # only label-0 windows are corrupted
    assert out.window_labels.sum() == 15


def test_contamination_zero_rate_noop():
    ds = _toy_windows()
    out, mask = inject_contamination(ds, ContaminationPlan(0.0), np.random.default_rng(3))
    assert mask.sum() == 0
    assert np.array_equal(out.windows, ds.windows)
    assert out.windows is not ds.windows  # still a copy


def test_contamination_overflow_and_rounding_half():
    labels = np.ones(10, dtype=np.int8)
    labels[:2] = 0  # 8 anomalous, 2 clean; round(0.5*8)=4 > 2 clean
    ds = _toy_windows(n=10, labels=labels)
    with pytest.raises(DataError, match="only 2 clean windows"):
        inject_contamination(ds, ContaminationPlan(0.5), np.random.default_rng(0))
    # half-away rounding: 0.1 * 75 = 7.5 -> 8
    ds = _toy_windows(n=75)
    _, mask = inject_contamination(ds, ContaminationPlan(0.1), np.random.default_rng(0))
    assert mask.sum() == 8


def test_contamination_determinism_and_kinds():
    ds = _toy_windows(n=30)
    plan = ContaminationPlan(0.2, kinds=("pattern",))
    a, am = inject_contamination(ds, plan, np.random.default_rng(9))
    b, bm = inject_contamination(ds, plan, np.random.default_rng(9))
    assert np.array_equal(a.windows, b.windows) and np.array_equal(am, bm)
    with pytest.raises(DataError, match="unknown injection kinds"):
        ContaminationPlan(0.1, kinds=("blip",))


def test_point_injection_visibly_displaces():
    ds = _toy_windows(n=20, length=16)
    out, mask = inject_contamination(
        ds, ContaminationPlan(0.2, kinds=("point_global",)), np.random.default_rng(5)
    )
    std = ds.windows.reshape(-1, 1).std()
    for i in np.flatnonzero(mask):
        diff = np.abs(out.windows[i] - ds.windows[i])
        assert (diff > 0).sum() == 1  # exactly one sample touched
        assert diff.max() >= 3 * std * 0.99


def test_split_validation():
    s = RawSeries(np.arange(100.0), np.zeros(100, dtype=np.int8))
    train, val = split_validation(s, 0.1)
    assert train.length == 90 and val.length == 10
    assert np.allclose(val.values[:, 0], np.arange(90.0, 100.0))
    with pytest.raises(DataError):
        split_validation(s, 0.9)


def test_fingerprint_and_npz_round_trip(tmp_path):
    ds = _toy_windows(labels=np.zeros(10, dtype=np.int8))
    fp = fingerprint(ds)
    assert fp == fingerprint(ds)
    bumped = WindowedDataset(ds.windows + 1e-9, ds.window_labels, ds.origin_index)
    assert fp != fingerprint(bumped)
    path = tmp_path / "ds.npz"
    save_windowed(ds, path)
    again = load_windowed(path)
    assert np.array_equal(again.windows, ds.windows)
    assert np.array_equal(again.window_labels, ds.window_labels)
    assert fingerprint(again) == fp
    with pytest.raises(DataError):
        load_windowed(tmp_path / "nope.npz")
