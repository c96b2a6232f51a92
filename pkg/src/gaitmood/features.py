"""The windowed feature vector: 17 statistics per axis, angles, magnitude, heart rate.

Conventions (fixed so results are reproducible across implementations):

* standard deviation is the population form (divide by N);
* energy is the mean of squared values; RMS is its square root; RSS is the
  square root of the *sum* of squares;
* skewness is the biased Fisher-Pearson coefficient m3 / m2^1.5 and kurtosis
  is biased excess kurtosis m4 / m2^2 - 3; both are 0 for constant windows;
* quartiles interpolate linearly between order statistics at position
  q * (N - 1);
* the three angle features come from the accelerometer mean vector only:
  angle_k = arccos(m_k / ||m||), all zero when ||m|| is numerically zero.

The canonical feature order is 17 statistics for each of acc_x, acc_y,
acc_z (then gyro_x, gyro_y, gyro_z when present), the three angles, the
magnitude standard deviation, and last the heart rate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .preprocess import WindowBundle

STAT_NAMES = (
    "mean", "std", "max", "min", "energy", "kurtosis", "skewness", "rms",
    "rss", "sum", "abs_sum", "abs_mean", "range", "median", "q75", "q25", "mad",
)
ACC_AXES = ("acc_x", "acc_y", "acc_z")
GYRO_AXES = ("gyro_x", "gyro_y", "gyro_z")
ANGLE_NAMES = ("angle_x", "angle_y", "angle_z")
MAGNITUDE_NAME = "magnitude_std"
HR_NAME = "heart_rate"

FEATURE_SETS = ("acc_gyro_hr", "acc_hr", "acc_only")

_ZERO_NORM_EPS = 1e-12


def feature_names(feature_set: str = "acc_gyro_hr") -> tuple[str, ...]:
    """Canonical, frozen feature-name order for a sensor subset."""
    if feature_set not in FEATURE_SETS:
        raise ConfigError(f"unknown feature set {feature_set!r}; expected one of {FEATURE_SETS}")
    axes = ACC_AXES + GYRO_AXES if feature_set == "acc_gyro_hr" else ACC_AXES
    names = [f"{axis}_{stat}" for axis in axes for stat in STAT_NAMES]
    names += list(ANGLE_NAMES)
    names.append(MAGNITUDE_NAME)
    if feature_set != "acc_only":
        names.append(HR_NAME)
    return tuple(names)


def _stats_bulk(windows: np.ndarray) -> np.ndarray:
    """The 17 per-axis statistics for each row of an (n, w) array -> (n, 17)."""
    a = np.asarray(windows, dtype=np.float64)
    mean = a.mean(axis=1)
    dev = a - mean[:, None]
    m2 = np.mean(dev ** 2, axis=1)
    m3 = np.mean(dev ** 3, axis=1)
    m4 = np.mean(dev ** 4, axis=1)
    std = np.sqrt(m2)
    nonconst = m2 > 0.0
    kurtosis = np.zeros_like(m2)
    skewness = np.zeros_like(m2)
    np.divide(m4, m2 ** 2, out=kurtosis, where=nonconst)
    kurtosis[nonconst] -= 3.0
    np.divide(m3, m2 ** 1.5, out=skewness, where=nonconst)
    sq = a ** 2
    energy = sq.mean(axis=1)
    rms = np.sqrt(energy)
    rss = np.sqrt(sq.sum(axis=1))
    total = a.sum(axis=1)
    abs_a = np.abs(a)
    abs_sum = abs_a.sum(axis=1)
    abs_mean = abs_a.mean(axis=1)
    amax = a.max(axis=1)
    amin = a.min(axis=1)
    q25, median, q75 = np.percentile(a, [25.0, 50.0, 75.0], axis=1)
    mad = np.median(np.abs(a - median[:, None]), axis=1)
    return np.column_stack([
        mean, std, amax, amin, energy, kurtosis, skewness, rms, rss,
        total, abs_sum, abs_mean, amax - amin, median, q75, q25, mad,
    ])


def axis_stats(x: np.ndarray) -> np.ndarray:
    """The 17 statistics of one window's single-axis values, in canonical order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("axis_stats expects a one-dimensional window")
    if not np.all(np.isfinite(x)):
        raise DataError("non-finite value in window")
    return _stats_bulk(x[None, :])[0]


def angle_features(acc: np.ndarray) -> np.ndarray:
    """Angles (radians) between the window's accelerometer mean vector and each axis."""
    acc = np.asarray(acc, dtype=np.float64)
    m = acc.mean(axis=0)
    norm = float(np.linalg.norm(m))
    if norm < _ZERO_NORM_EPS:
        return np.zeros(3)
    return np.arccos(np.clip(m / norm, -1.0, 1.0))


def magnitude_std(acc: np.ndarray) -> float:
    """Population standard deviation of the per-sample Euclidean magnitude."""
    acc = np.asarray(acc, dtype=np.float64)
    return float(np.sqrt((acc ** 2).sum(axis=1)).std())


@dataclass
class FeatureVector:
    """One window's named feature row."""

    values: np.ndarray
    names: tuple[str, ...]
    label: str
    participant_id: str
    condition: int
    window_index: int


@dataclass
class FeatureTable:
    """Feature matrix plus per-row provenance, in canonical row order."""

    feature_names: tuple[str, ...]
    X: np.ndarray                 # (n, d)
    labels: np.ndarray            # (n,) str
    participant_ids: np.ndarray   # (n,) str
    conditions: np.ndarray        # (n,) int
    window_indices: np.ndarray    # (n,) int

    def __len__(self) -> int:
        return int(self.X.shape[0])

    def restrict_labels(self, keep: tuple[str, ...]) -> "FeatureTable":
        mask = np.isin(self.labels, keep)
        return FeatureTable(
            self.feature_names, self.X[mask], self.labels[mask],
            self.participant_ids[mask], self.conditions[mask], self.window_indices[mask],
        )

    def for_participant(self, participant_id: str) -> "FeatureTable":
        mask = self.participant_ids == participant_id
        return FeatureTable(
            self.feature_names, self.X[mask], self.labels[mask],
            self.participant_ids[mask], self.conditions[mask], self.window_indices[mask],
        )


def _bundle_matrix(bundles: list[WindowBundle], feature_set: str) -> np.ndarray:
    names = feature_names(feature_set)
    n = len(bundles)
    acc = np.stack([b.acc for b in bundles])            # (n, 24, 3)
    blocks = [_stats_bulk(acc[:, :, axis]) for axis in range(3)]
    if feature_set == "acc_gyro_hr":
        gyro = np.stack([b.gyro for b in bundles])
        blocks += [_stats_bulk(gyro[:, :, axis]) for axis in range(3)]
    means = acc.mean(axis=1)                            # (n, 3)
    norms = np.linalg.norm(means, axis=1)
    safe = np.where(norms < _ZERO_NORM_EPS, 1.0, norms)
    angles = np.arccos(np.clip(means / safe[:, None], -1.0, 1.0))
    angles[norms < _ZERO_NORM_EPS] = 0.0
    blocks.append(angles)
    mags = np.sqrt((acc ** 2).sum(axis=2))              # (n, 24)
    blocks.append(mags.std(axis=1)[:, None])
    if feature_set != "acc_only":
        blocks.append(np.array([b.hr_bpm for b in bundles], dtype=np.float64)[:, None])
    X = np.hstack(blocks)
    if X.shape != (n, len(names)):
        raise DataError(f"feature matrix shape {X.shape} != ({n}, {len(names)})")
    if not np.all(np.isfinite(X)):
        bad = int(np.argwhere(~np.isfinite(X))[0, 0])
        b = bundles[bad]
        raise DataError(
            f"non-finite feature for participant {b.participant_id} "
            f"{b.emotion} window {b.window_index}"
        )
    return X


def extract_features(bundle: WindowBundle, feature_set: str = "acc_gyro_hr") -> FeatureVector:
    """Featurize one window."""
    X = _bundle_matrix([bundle], feature_set)
    return FeatureVector(
        values=X[0],
        names=feature_names(feature_set),
        label=bundle.emotion,
        participant_id=bundle.participant_id,
        condition=bundle.condition,
        window_index=bundle.window_index,
    )


def featurize(bundles: list[WindowBundle], feature_set: str = "acc_gyro_hr") -> FeatureTable:
    """Featurize many windows, preserving their (canonical) order."""
    if not bundles:
        raise DataError("no windows to featurize")
    X = _bundle_matrix(bundles, feature_set)
    return FeatureTable(
        feature_names=feature_names(feature_set),
        X=X,
        labels=np.array([b.emotion for b in bundles], dtype=object),
        participant_ids=np.array([b.participant_id for b in bundles], dtype=object),
        conditions=np.array([b.condition for b in bundles], dtype=np.int64),
        window_indices=np.array([b.window_index for b in bundles], dtype=np.int64),
    )


def write_feature_csv(table: FeatureTable, path: Path | str) -> None:
    """Feature matrix CSV with the frozen header; floats use repr for exact round-trips."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["participant", "condition", "emotion", "window_index", *table.feature_names])
        for i in range(len(table)):
            writer.writerow([
                table.participant_ids[i],
                int(table.conditions[i]),
                table.labels[i],
                int(table.window_indices[i]),
                *[repr(v) for v in table.X[i].tolist()],
            ])


def read_feature_csv(path: Path | str) -> FeatureTable:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:4] != ["participant", "condition", "emotion", "window_index"]:
            raise DataError(f"{path}: not a feature matrix CSV")
        names = tuple(header[4:])
        pids, conds, labels, widx, rows = [], [], [], [], []
        for row in reader:
            if not row:
                continue
            pids.append(row[0])
            conds.append(int(row[1]))
            labels.append(row[2])
            widx.append(int(row[3]))
            rows.append([float(v) for v in row[4:]])
    return FeatureTable(
        feature_names=names,
        X=np.array(rows, dtype=np.float64),
        labels=np.array(labels, dtype=object),
        participant_ids=np.array(pids, dtype=object),
        conditions=np.array(conds, dtype=np.int64),
        window_indices=np.array(widx, dtype=np.int64),
    )
