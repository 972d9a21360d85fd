"""Seeded sine telemetry with injected anomalies of known location.

Column 0 is the noisy telemetry value and column 1 the clean commanded
reference it should follow, mirroring the telemetry-plus-commands layout
of the real channels.  The training split is clean; the test split
carries ``n_anomalies`` segments on column 0, alternating spike bursts
and level shifts, separated by at least ``min_gap`` normal points.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .dataset import ChannelData
from .npy_io import save_npy

SYNTHETIC_ID = "SYN-1"


def _sine(n, period, phase, noise, rng):
    ref = np.sin(2 * np.pi * np.arange(n) / period + phase)
    return ref + rng.normal(0.0, noise, n), ref


def _place_segments(n, lengths, min_gap, rng):
    """Non-overlapping starts with at least ``min_gap`` points between segments."""
    free = n - sum(lengths) - min_gap * (len(lengths) + 1)
    if free < 0:
        raise ValueError("series too short for the requested anomalies")
    # split the slack into len+1 random gaps
    cuts = np.sort(rng.integers(0, free + 1, size=len(lengths)))
    slack = np.diff(np.concatenate([[0], cuts]))
    starts, pos = [], min_gap
    for extra, length in zip(slack, lengths):
        pos += int(extra)
        starts.append(pos)
        pos += length + min_gap
    return starts


def make_synthetic(seed: int = 0, n_train: int = 3000, n_test: int = 5000,
                   n_anomalies: int = 10, noise: float = 0.05, period: float = 50.0,
                   min_len: int = 20, max_len: int = 60, min_gap: int = 100,
                   channel_id: str = SYNTHETIC_ID) -> ChannelData:
    rng = np.random.default_rng(seed)
    phase = rng.uniform(0, 2 * np.pi)
    train, train_ref = _sine(n_train, period, phase, noise, rng)
    test, test_ref = _sine(n_test, period, phase + 2 * np.pi * n_train / period, noise, rng)
    lengths = [int(v) for v in rng.integers(min_len, max_len + 1, size=n_anomalies)]
    starts = _place_segments(n_test, lengths, min_gap, rng)
    segments = []
    for k, (start, length) in enumerate(zip(starts, lengths)):
        end = start + length - 1
        if k % 2 == 0:
            # burst of spikes with random sign
            amp = rng.uniform(0.8, 1.2, length) * rng.choice([-1.0, 1.0], length)
            test[start:end + 1] += amp
        else:
            test[start:end + 1] += rng.choice([-1.0, 1.0]) * rng.uniform(0.8, 1.2)
        segments.append((start, end))
    return ChannelData(channel_id, np.column_stack([train, train_ref]),
                       np.column_stack([test, test_ref]), tuple(segments))


def write_dataset(channels, root) -> None:
    """Lay channels out as ``train/<id>.npy``, ``test/<id>.npy`` and a label CSV."""
    for split in ("train", "test"):
        os.makedirs(os.path.join(root, split), exist_ok=True)
    with open(os.path.join(root, "labeled_anomalies.csv"), "w", newline="",
              encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chan_id", "spacecraft", "anomaly_sequences", "num_values"])
        for ch in channels:
            save_npy(os.path.join(root, "train", f"{ch.channel_id}.npy"), ch.train)
            save_npy(os.path.join(root, "test", f"{ch.channel_id}.npy"), ch.test)
            w.writerow([ch.channel_id, "SMAP",
                        json.dumps([list(s) for s in ch.anomaly_segments]),
                        ch.test.shape[0]])
