"""Dataset ingestion, chronological splitting, scaling, windowing, patching,
reversible per-window instance normalization, and mask generation for the
masked-reconstruction pretraining flow."""

import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ConfigError, DataError

REVIN_EPS = 1e-5
SCALE_EPS = 1e-8

# rows per month for the month-based split profiles
_ROWS_PER_MONTH = {"ett_hours": 30 * 24, "ett_minutes": 30 * 24 * 4}


@dataclass
class SeriesFrame:
    values: np.ndarray  # T x c
    channel_names: list
    timestamps: list | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"series values must be T x c, got shape {self.values.shape}")

    @property
    def length(self):
        return self.values.shape[0]

    @property
    def num_channels(self):
        return self.values.shape[1]


def load_csv(path, date_column="auto"):
    """Load a wide CSV: optional leading date column, one column per channel."""
    df = pd.read_csv(path)
    if df.shape[0] < 2:
        raise DataError(f"{path}: need at least 2 rows, got {df.shape[0]}")
    timestamps = None
    if date_column == "auto":
        first = df.columns[0]
        has_date = first.lower() in ("date", "time", "timestamp") or not pd.api.types.is_numeric_dtype(df[first])
    else:
        has_date = bool(date_column)
    if has_date:
        timestamps = df.iloc[:, 0].astype(str).tolist()
        df = df.iloc[:, 1:]
    values = df.to_numpy(dtype=np.float64)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        r, c = bad[0]
        raise DataError(f"{path}: non-finite value at row {r}, column {df.columns[c]!r}")
    return SeriesFrame(values, channel_names=list(df.columns), timestamps=timestamps)


@dataclass
class SplitSpec:
    train: tuple
    val: tuple
    test: tuple
    profile: str
    context_rows: int

    def as_dict(self):
        return {
            "profile": self.profile,
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
            "context_rows": self.context_rows,
        }


def split_bounds(total, profile, sl):
    if profile == "ratio_70_10_20":
        n_train = int(total * 0.7)
        n_test = int(total * 0.2)
        n_val = total - n_train - n_test
    elif profile in _ROWS_PER_MONTH:
        rpm = _ROWS_PER_MONTH[profile]
        n_train, n_val, n_test = 12 * rpm, 4 * rpm, 4 * rpm
        if n_train + n_val + n_test > total:
            raise DataError(f"frame too short for {profile} split: {total} rows")
    else:
        raise ConfigError(f"unknown split profile {profile!r}")
    return SplitSpec(
        train=(0, n_train),
        val=(n_train - sl, n_train + n_val),
        test=(n_train + n_val - sl, min(n_train + n_val + n_test, total)),
        profile=profile,
        context_rows=sl,
    )


def chrono_split(frame, profile, sl, fl):
    """Chronological train/val/test split; val/test carry sl context rows."""
    spec = split_bounds(frame.length, profile, sl)
    segments = []
    for lo, hi in (spec.train, spec.val, spec.test):
        if hi - lo < sl + fl:
            raise DataError(f"split segment [{lo},{hi}) shorter than sl+fl={sl + fl}")
        segments.append(SeriesFrame(frame.values[lo:hi], frame.channel_names))
    return (*segments, spec)


@dataclass
class StandardScaler:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, frame):
        if frame.length == 0:
            raise DataError("cannot fit scaler on empty segment")
        mean = frame.values.mean(axis=0)
        std = frame.values.std(axis=0)
        return cls(mean=mean, std=np.maximum(std, SCALE_EPS))

    def transform(self, frame):
        return SeriesFrame((frame.values - self.mean) / self.std, frame.channel_names, frame.timestamps)

    def inverse_transform(self, values):
        return values * self.std + self.mean


@dataclass
class WindowBatch:
    inputs: np.ndarray  # b x sl x c
    targets: np.ndarray  # b x fl x c


@dataclass
class WindowDataset:
    """All (input, target) windows of a segment, target right after input."""

    segment: SeriesFrame
    sl: int
    fl: int
    stride: int = 1
    _starts: np.ndarray = field(init=False)

    def __post_init__(self):
        last = self.segment.length - self.sl - self.fl
        if last < 0:
            warnings.warn(f"segment of length {self.segment.length} too short for sl+fl={self.sl + self.fl}")
            self._starts = np.array([], dtype=int)
        else:
            self._starts = np.arange(0, last + 1, self.stride)

    def __len__(self):
        return len(self._starts)

    def window(self, i):
        s = self._starts[i]
        v = self.segment.values
        return v[s : s + self.sl], v[s + self.sl : s + self.sl + self.fl]

    def batches(self, batch_size, shuffle=False, rng=None):
        order = np.arange(len(self))
        if shuffle:
            (rng or np.random.default_rng()).shuffle(order)
        for lo in range(0, len(order), batch_size):
            chunk = order[lo : lo + batch_size]
            pairs = [self.window(i) for i in chunk]
            yield WindowBatch(
                inputs=np.stack([p[0] for p in pairs]),
                targets=np.stack([p[1] for p in pairs]),
            )


# -- reversible instance normalization ----------------------------------


@dataclass
class RevinStats:
    mean: np.ndarray  # b x 1 x c
    std: np.ndarray  # b x 1 x c


def revin_normalize(inputs):
    """Per-window per-channel standardization over the time axis.

    Reductions run over a contiguous per-channel axis so the statistics are
    bitwise identical under any channel permutation (strided-axis reductions
    are not)."""
    per_channel = np.ascontiguousarray(np.swapaxes(inputs, 1, 2))  # b x c x t
    mean = np.swapaxes(per_channel.mean(axis=2, keepdims=True), 1, 2)
    std = np.swapaxes(per_channel.std(axis=2, keepdims=True), 1, 2) + REVIN_EPS
    return (inputs - mean) / std, RevinStats(mean=mean, std=std)


def revin_denormalize(outputs, stats):
    return outputs * stats.std + stats.mean


# -- patching -----------------------------------------------------------


def num_patches(sl, pl, s):
    return (sl - pl) // s + 1


@dataclass
class PatchBatch:
    patches: np.ndarray  # b x c x n x pl
    mask: np.ndarray  # b x c x n bool, all False in the supervised flow
    patch_len: int
    stride: int

    @property
    def n(self):
        return self.patches.shape[2]


def patch(inputs, pl, s):
    """b x sl x c -> b x c x n x pl with patches[b][ch][i][j] == inputs[b][i*s+j][ch]."""
    b, sl, c = inputs.shape
    if pl > sl:
        raise DataError(f"patch length {pl} exceeds sequence length {sl}")
    n = num_patches(sl, pl, s)
    idx = s * np.arange(n)[:, None] + np.arange(pl)[None, :]  # n x pl
    patches = inputs[:, idx, :]  # b x n x pl x c
    patches = np.transpose(patches, (0, 3, 1, 2)).copy()
    return PatchBatch(patches=patches, mask=np.zeros((b, c, n), dtype=bool), patch_len=pl, stride=s)


def mask_patches(patch_batch, ratio, rng):
    """Mask floor(ratio*n) patches per (window, channel); masked values -> 0."""
    if patch_batch.stride != patch_batch.patch_len:
        raise ConfigError("masking requires non-overlapping patches (stride == patch length)")
    if not 0.0 <= ratio < 1.0:
        raise ConfigError(f"mask ratio must be in [0, 1), got {ratio}")
    b, c, n, pl = patch_batch.patches.shape
    k = int(ratio * n)
    mask = np.zeros((b, c, n), dtype=bool)
    patches = patch_batch.patches.copy()
    if k > 0:
        for bi in range(b):
            for ci in range(c):
                chosen = rng.choice(n, size=k, replace=False)
                mask[bi, ci, chosen] = True
        patches[mask] = 0.0
    return PatchBatch(patches=patches, mask=mask, patch_len=pl, stride=patch_batch.stride)
