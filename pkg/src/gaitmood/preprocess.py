"""Mean filtering, sliding windows, and gyro/heart-rate alignment.

Windows are cut on the accelerometer stream by index (24 samples with a
12-sample step, nominally one second at the watch's rate) after the segment
has been trimmed and mean-filtered. The gyroscope is aligned to each window
by nearest timestamp and the heart rate is the in-window mean with forward
fill. Windows that cannot be aligned are dropped and counted, never silently.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AlignmentError, ConfigError, DataError, MissingHeartRateError
from .ingest import (
    EMOTIONS,
    HeartRateSeries,
    ParticipantData,
    SampleSeries,
    WalkSegment,
    trim_to_segment,
)

WINDOW_SIZE = 24
WINDOW_STEP = 12
GYRO_MAX_GAP_MS = 500


@dataclass
class WindowBundle:
    """One windowed sample: filtered accelerometer, aligned gyro, heart rate, label."""

    window_index: int
    acc: np.ndarray       # (24, 3)
    gyro: np.ndarray      # (24, 3)
    hr_bpm: float
    emotion: str
    participant_id: str
    condition: int
    start_ms: int
    end_ms: int


@dataclass
class DropLog:
    """Windows dropped during preprocessing, by cause."""

    gyro_gap: int = 0
    missing_hr: int = 0
    reasons: list[str] = field(default_factory=list)

    def merge(self, other: "DropLog") -> None:
        self.gyro_gap += other.gyro_gap
        self.missing_hr += other.missing_hr
        self.reasons.extend(other.reasons)

    @property
    def total(self) -> int:
        return self.gyro_gap + self.missing_hr


def mean_filter(series: SampleSeries, width: int = 3) -> SampleSeries:
    """Moving-average smooth each axis over an odd-width window.

    Edge windows shrink to the available samples, so length and timestamps
    are unchanged. ``width=1`` is the identity.
    """
    if width < 1 or width % 2 == 0:
        raise ConfigError(f"mean filter width must be odd and >= 1, got {width}")
    if width == 1:
        return SampleSeries(series.sensor_kind, series.timestamps.copy(), series.values.copy())
    n = len(series)
    half = width // 2
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half, n - 1)
    csum = np.vstack([np.zeros(3), np.cumsum(series.values, axis=0)])
    sums = csum[hi + 1] - csum[lo]
    counts = (hi - lo + 1).astype(np.float64)
    return SampleSeries(series.sensor_kind, series.timestamps.copy(), sums / counts[:, None])


def make_windows(series: SampleSeries, size: int = WINDOW_SIZE, step: int = WINDOW_STEP) -> list[tuple[int, int]]:
    """Index ranges ``[start, start + size)`` at ``start = 0, step, 2*step, ...``.

    The trailing partial window is discarded; a series shorter than ``size``
    is an error.
    """
    if size < 1 or step < 1:
        raise ConfigError(f"window size and step must be >= 1, got size={size} step={step}")
    n = len(series)
    if n < size:
        raise DataError(f"series of {n} samples is shorter than one window ({size})")
    count = (n - size) // step + 1
    return [(i * step, i * step + size) for i in range(count)]


def align_gyro(
    window_ts: np.ndarray, gyro: SampleSeries, max_gap_ms: int = GYRO_MAX_GAP_MS
) -> np.ndarray:
    """Nearest-timestamp gyro sample for each accelerometer timestamp (ties go earlier)."""
    gts = gyro.timestamps
    pos = np.searchsorted(gts, window_ts, side="left")
    right = np.minimum(pos, len(gts) - 1)
    left = np.maximum(pos - 1, 0)
    dist_left = np.abs(window_ts - gts[left])
    dist_right = np.abs(gts[right] - window_ts)
    pick = np.where(dist_left <= dist_right, left, right)
    gaps = np.minimum(dist_left, dist_right)
    worst = int(np.argmax(gaps))
    if gaps[worst] > max_gap_ms:
        raise AlignmentError(
            f"gyro gap of {int(gaps[worst])} ms at {int(window_ts[worst])} ms exceeds {max_gap_ms} ms"
        )
    return gyro.values[pick]


def align_hr(window_ts: np.ndarray, hr: HeartRateSeries) -> float:
    """Mean bpm of samples inside the window, else the last sample before it."""
    start, end = int(window_ts[0]), int(window_ts[-1])
    lo = int(np.searchsorted(hr.timestamps, start, side="left"))
    hi = int(np.searchsorted(hr.timestamps, end, side="right"))
    if hi > lo:
        return float(hr.bpm[lo:hi].mean())
    if lo == 0:
        raise MissingHeartRateError(f"no heart-rate sample at or before window end {end} ms")
    return float(hr.bpm[lo - 1])


def segment_windows(
    data: ParticipantData,
    segment: WalkSegment,
    *,
    size: int = WINDOW_SIZE,
    step: int = WINDOW_STEP,
    filter_width: int = 3,
    gyro_max_gap_ms: int = GYRO_MAX_GAP_MS,
) -> tuple[list[WindowBundle], DropLog]:
    """Trim, filter, window, and align one labeled walking segment."""
    acc = mean_filter(trim_to_segment(data.acc, segment), filter_width)
    bundles: list[WindowBundle] = []
    drops = DropLog()
    for index, (lo, hi) in enumerate(make_windows(acc, size, step)):
        window_ts = acc.timestamps[lo:hi]
        where = f"participant {data.participant_id} {segment.emotion} window {index}"
        try:
            gyro = align_gyro(window_ts, data.gyro, gyro_max_gap_ms)
        except AlignmentError as exc:
            drops.gyro_gap += 1
            drops.reasons.append(f"{where}: {exc}")
            continue
        try:
            hr_bpm = align_hr(window_ts, data.hr)
        except MissingHeartRateError as exc:
            drops.missing_hr += 1
            drops.reasons.append(f"{where}: {exc}")
            continue
        bundles.append(
            WindowBundle(
                window_index=index,
                acc=acc.values[lo:hi],
                gyro=gyro,
                hr_bpm=hr_bpm,
                emotion=segment.emotion,
                participant_id=data.participant_id,
                condition=data.condition,
                start_ms=int(window_ts[0]),
                end_ms=int(window_ts[-1]),
            )
        )
    return bundles, drops


def participant_windows(data: ParticipantData, **kwargs) -> tuple[list[WindowBundle], DropLog]:
    """All windows for one participant in canonical (emotion, window_index) order."""
    bundles: list[WindowBundle] = []
    drops = DropLog()
    segments = sorted(data.entry.segments, key=lambda s: EMOTIONS.index(s.emotion))
    for segment in segments:
        seg_bundles, seg_drops = segment_windows(data, segment, **kwargs)
        bundles.extend(seg_bundles)
        drops.merge(seg_drops)
    return bundles, drops


def study_windows(participants: list[ParticipantData], **kwargs) -> tuple[list[WindowBundle], DropLog]:
    """Windows for a whole study in canonical (participant, emotion, window_index) order."""
    bundles: list[WindowBundle] = []
    drops = DropLog()
    for data in sorted(participants, key=lambda d: d.participant_id):
        p_bundles, p_drops = participant_windows(data, **kwargs)
        bundles.extend(p_bundles)
        drops.merge(p_drops)
    return bundles, drops


def dump_window_csv(bundles: list[WindowBundle], out_dir: Path | str) -> list[Path]:
    """Debug dump: one CSV per participant-emotion with window provenance."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple[str, str], list[WindowBundle]] = {}
    for b in bundles:
        groups.setdefault((b.participant_id, b.emotion), []).append(b)
    header = ["window_index", "start_ms", "end_ms", "hr_bpm"]
    header += [f"acc_{ax}_{i}" for ax in "xyz" for i in range(WINDOW_SIZE)]
    header += [f"gyro_{ax}_{i}" for ax in "xyz" for i in range(WINDOW_SIZE)]
    written = []
    for (pid, emotion), group in sorted(groups.items()):
        path = out_dir / f"{pid}_{emotion}_windows.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for b in group:
                row = [b.window_index, b.start_ms, b.end_ms, repr(b.hr_bpm)]
                row += [repr(v) for v in b.acc.T.ravel().tolist()]
                row += [repr(v) for v in b.gyro.T.ravel().tolist()]
                writer.writerow(row)
        written.append(path)
    return written
