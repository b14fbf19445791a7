import numpy as np
import pytest

from mixcast.data import (
    SeriesFrame,
    StandardScaler,
    WindowDataset,
    chrono_split,
    load_csv,
    mask_patches,
    num_patches,
    patch,
    revin_denormalize,
    revin_normalize,
    split_bounds,
)
from mixcast.errors import ConfigError, DataError


def _write_csv(path, T, c, date_col=True):
    rng = np.random.default_rng(0)
    with open(path, "w") as fh:
        header = (["date"] if date_col else []) + [f"ch{i}" for i in range(c)]
        fh.write(",".join(header) + "\n")
        for t in range(T):
            row = ([f"2020-01-01 {t:02d}"] if date_col else []) + [f"{v:.6f}" for v in rng.normal(size=c)]
            fh.write(",".join(row) + "\n")


def test_load_csv_with_date_column(tmp_path):
    p = tmp_path / "d.csv"
    _write_csv(p, 50, 7)
    frame = load_csv(p)
    assert frame.length == 50 and frame.num_channels == 7
    assert frame.timestamps is not None


def test_load_csv_tiny(tmp_path):
    p = tmp_path / "d.csv"
    _write_csv(p, 3, 1)
    frame = load_csv(p)
    assert (frame.length, frame.num_channels) == (3, 1)


def test_load_csv_rejects_nan(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n3,\n")
    with pytest.raises(DataError, match="row 1"):
        load_csv(p)


def test_load_csv_rejects_single_row(tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("a\n1\n")
    with pytest.raises(DataError, match="2 rows"):
        load_csv(p)


def test_ratio_split_boundaries():
    spec = split_bounds(100, "ratio_70_10_20", sl=10)
    assert spec.train == (0, 70)
    assert spec.val == (60, 80)
    assert spec.test == (70, 100)


def test_ett_hourly_split_rows():
    spec = split_bounds(17420, "ett_hours", sl=512)
    assert spec.train == (0, 8640)  # 12 months of hourly rows


def test_chrono_split_partition():
    frame = SeriesFrame(np.arange(200, dtype=float).reshape(100, 2), ["a", "b"])
    train, val, test, spec = chrono_split(frame, "ratio_70_10_20", sl=10, fl=5)
    # stripped of context prefixes, segments partition the frame
    joined = np.concatenate([train.values, val.values[10:], test.values[10:]])
    assert np.array_equal(joined, frame.values)


def test_chrono_split_too_short():
    frame = SeriesFrame(np.zeros((30, 1)), ["a"])
    with pytest.raises(DataError, match="shorter"):
        chrono_split(frame, "ratio_70_10_20", sl=10, fl=5)


def test_scaler_hand_computed():
    frame = SeriesFrame(np.array([[2.0], [4.0], [6.0]]), ["a"])
    scaler = StandardScaler.fit(frame)
    scaled = scaler.transform(frame).values[:, 0]
    assert np.allclose(scaled, [-1.224744871, 0.0, 1.224744871])


def test_scaler_constant_channel_guard():
    frame = SeriesFrame(np.full((3, 1), 5.0), ["a"])
    scaler = StandardScaler.fit(frame)
    assert np.allclose(scaler.transform(frame).values, 0.0)


def test_scaler_inverse_round_trip():
    rng = np.random.default_rng(0)
    frame = SeriesFrame(rng.normal(3.0, 2.0, size=(50, 4)), list("abcd"))
    scaler = StandardScaler.fit(frame)
    back = scaler.inverse_transform(scaler.transform(frame).values)
    assert np.abs(back - frame.values).max() < 1e-10


def test_window_count_law():
    for length, sl, fl in [(10, 5, 2), (21, 5, 2), (7, 5, 2), (30, 10, 10)]:
        seg = SeriesFrame(np.zeros((length, 1)), ["a"])
        assert len(WindowDataset(seg, sl, fl)) == length - sl - fl + 1


def test_single_window_boundary():
    seg = SeriesFrame(np.arange(7.0).reshape(7, 1), ["a"])
    ds = WindowDataset(seg, 5, 2)
    assert len(ds) == 1
    x, y = ds.window(0)
    assert np.array_equal(x[:, 0], np.arange(5.0))
    assert np.array_equal(y[:, 0], [5.0, 6.0])


def test_batch_grouping_keeps_partial():
    seg = SeriesFrame(np.zeros((26, 1)), ["a"])
    ds = WindowDataset(seg, 5, 2)  # 20 windows
    sizes = [b.inputs.shape[0] for b in ds.batches(8)]
    assert sizes == [8, 8, 4]


def test_short_segment_warns_empty():
    seg = SeriesFrame(np.zeros((4, 1)), ["a"])
    with pytest.warns(UserWarning):
        ds = WindowDataset(seg, 5, 2)
    assert len(ds) == 0


def test_revin_hand_computed():
    x = np.array([[[1.0], [2.0], [3.0]]])  # 1 x 3 x 1
    norm, stats = revin_normalize(x)
    assert np.allclose(norm[0, :, 0], [-1.224726, 0.0, 1.224726], atol=1e-4)
    assert np.allclose(stats.mean[0, 0, 0], 2.0)
    assert np.allclose(stats.std[0, 0, 0], 0.8165, atol=1e-3)


def test_revin_round_trip_including_near_constant():
    rng = np.random.default_rng(0)
    windows = rng.normal(size=(100, 16, 3)) * 10.0
    windows[:5] = 7.0  # constant
    windows[5:10] = 7.0 + 1e-9 * rng.normal(size=(5, 16, 3))
    norm, stats = revin_normalize(windows)
    back = revin_denormalize(norm, stats)
    denom = max(np.abs(windows).max(), 1.0)
    assert np.abs(back - windows).max() / denom < 1e-6


def test_patch_counts_default_configs():
    assert num_patches(512, 16, 8) == 63
    assert num_patches(512, 8, 8) == 64


def test_patch_gather_identity():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 20, 3))
    pb = patch(x, pl=6, s=4)
    assert pb.n == num_patches(20, 6, 4)
    for b in range(2):
        for ch in range(3):
            for i in range(pb.n):
                for j in range(6):
                    assert pb.patches[b, ch, i, j] == x[b, i * 4 + j, ch]


def test_patch_single():
    x = np.arange(8.0).reshape(1, 8, 1)
    pb = patch(x, pl=8, s=8)
    assert pb.n == 1
    assert np.array_equal(pb.patches[0, 0, 0], np.arange(8.0))


def test_patch_rejects_pl_gt_sl():
    with pytest.raises(DataError):
        patch(np.zeros((1, 4, 1)), pl=8, s=8)


def test_mask_count_exact():
    pb = patch(np.random.default_rng(0).normal(size=(3, 40, 2)), pl=4, s=4)
    masked = mask_patches(pb, 0.4, np.random.default_rng(1))
    assert (masked.mask.sum(axis=2) == int(0.4 * pb.n)).all()
    assert (masked.patches[masked.mask] == 0.0).all()


def test_mask_zero_ratio_untouched():
    pb = patch(np.random.default_rng(0).normal(size=(1, 16, 1)), pl=4, s=4)
    masked = mask_patches(pb, 0.0, np.random.default_rng(0))
    assert not masked.mask.any()
    assert np.array_equal(masked.patches, pb.patches)


def test_mask_reproducible_and_seed_sensitive():
    pb = patch(np.random.default_rng(0).normal(size=(2, 512, 3)), pl=8, s=8)  # n=64
    m1 = mask_patches(pb, 0.4, np.random.default_rng(7)).mask
    m2 = mask_patches(pb, 0.4, np.random.default_rng(7)).mask
    m3 = mask_patches(pb, 0.4, np.random.default_rng(8)).mask
    assert np.array_equal(m1, m2)
    assert not np.array_equal(m1, m3)


def test_mask_rejects_overlap():
    pb = patch(np.zeros((1, 16, 1)), pl=8, s=4)
    with pytest.raises(ConfigError, match="non-overlapping"):
        mask_patches(pb, 0.4, np.random.default_rng(0))
