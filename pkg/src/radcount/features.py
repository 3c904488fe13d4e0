"""18-dimensional statistical summary of a radar cube.

For each frame three spatial statistics are taken (mean, std, Gini). Each of
the three per-frame series is then reduced to six numbers, giving the layout

    [mean-series | std-series | gini-series], each (median, max, min, p75, p25, std)
"""

from __future__ import annotations

import csv
from typing import Sequence

import numpy as np

from .core import RadarCube

N_FEATURES = 18
SERIES = ("mean", "std", "gini")
STATS = ("median", "max", "min", "p75", "p25", "std")
FEATURE_NAMES = tuple(f"{s}_{t}" for s in SERIES for t in STATS)
COLUMNS = tuple(f"f{i:02d}" for i in range(N_FEATURES))


def frame_mean(frame: np.ndarray) -> float:
    return float(np.mean(frame))


def frame_std(frame: np.ndarray) -> float:
    return float(np.std(frame))


def frame_gini(frame: np.ndarray) -> float:
    x = np.sort(np.asarray(frame, dtype=np.float64).ravel())
    if x.size and x[0] < 0:
        raise ValueError("Gini coefficient needs non-negative entries")
    total = x.sum()
    if total == 0:
        return 0.0
    n = x.size
    i = np.arange(1, n + 1)
    return float(2.0 * np.dot(i, x) / (n * total) - (n + 1) / n)


def _gini_rows(frames: np.ndarray) -> np.ndarray:
    x = np.sort(frames.reshape(frames.shape[0], -1), axis=1)
    if x.size and x.min() < 0:
        raise ValueError("Gini coefficient needs non-negative entries")
    n = x.shape[1]
    total = x.sum(axis=1)
    weighted = x @ np.arange(1, n + 1, dtype=np.float64)
    safe = np.where(total == 0, 1.0, total)
    g = 2.0 * weighted / (n * safe) - (n + 1) / n
    return np.where(total == 0, 0.0, g)


def summarize(series: Sequence[float]) -> np.ndarray:
    """(median, max, min, p75, p25, population std) with linear percentiles."""
    s = np.asarray(series, dtype=np.float64)
    if s.size == 0:
        raise ValueError("cannot summarize an empty series")
    p25, med, p75 = np.percentile(s, [25, 50, 75], method="linear")
    # a constant series has exactly zero spread; np.std can leave 1 ulp behind
    spread = 0.0 if s.max() == s.min() else s.std()
    return np.array([med, s.max(), s.min(), p75, p25, spread])


def frame_series(cube: RadarCube) -> np.ndarray:
    """Per-frame (mean, std, gini) as a (3, frames) array."""
    flat = cube.data.reshape(cube.frames, -1)
    return np.stack([flat.mean(axis=1), flat.std(axis=1), _gini_rows(cube.data)])


def extract_features(cube: RadarCube) -> np.ndarray:
    series = frame_series(cube)
    return np.concatenate([summarize(s) for s in series])


def write_features_csv(path, rows: Sequence[np.ndarray], labels, environments, splits) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(COLUMNS) + ["label", "environment", "split"])
        for x, y, env, sp in zip(rows, labels, environments, splits):
            w.writerow([repr(float(v)) for v in x] + [int(y), env, sp])


def read_features_csv(path):
    """Returns (X, y, environments, splits)."""
    X, y, envs, splits = [], [], [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            X.append([float(rec[c]) for c in COLUMNS])
            y.append(int(rec["label"]))
            envs.append(rec["environment"])
            splits.append(rec["split"])
    return np.array(X, dtype=np.float64).reshape(-1, N_FEATURES), np.array(y, dtype=np.int64), envs, splits
