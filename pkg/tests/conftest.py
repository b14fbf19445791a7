import numpy as np
import pytest

from mixcast.config import ModelConfig
from mixcast.data import SeriesFrame, StandardScaler, WindowDataset


def sine_frame(T=400, c=1, freqs=None, noise=0.0, seed=0):
    """Deterministic sinusoid mixture, one frequency set per channel."""
    rng = np.random.default_rng(seed)
    t = np.arange(T, dtype=np.float64)
    freqs = freqs or [0.05 * (i + 1) for i in range(c)]
    cols = []
    for i in range(c):
        phase = 2.0 * np.pi * i / max(c, 1)
        col = np.sin(2.0 * np.pi * freqs[i] * t + phase)
        if noise:
            col = col + noise * rng.normal(size=T)
        cols.append(col)
    return SeriesFrame(np.stack(cols, axis=1), [f"ch{i}" for i in range(c)])


def toy_datasets(T=400, c=1, sl=64, fl=16, noise=0.0, seed=0, val_frac=0.15, freqs=None):
    """Train/val/test window datasets over a scaled sinusoid."""
    frame = sine_frame(T, c, freqs=freqs, noise=noise, seed=seed)
    n_train = int(T * 0.7)
    train = SeriesFrame(frame.values[:n_train], frame.channel_names)
    scaler = StandardScaler.fit(train)
    n_val = int(T * val_frac)
    val = SeriesFrame(frame.values[n_train - sl : n_train + n_val], frame.channel_names)
    test = SeriesFrame(frame.values[n_train + n_val - sl :], frame.channel_names)
    return tuple(WindowDataset(scaler.transform(f), sl, fl) for f in (train, val, test))


@pytest.fixture
def toy_cfg():
    return ModelConfig(sl=64, pl=8, s=8, fl=16, nl=2, fs=2, do=0.0)
