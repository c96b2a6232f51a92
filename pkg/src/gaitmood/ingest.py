"""Sensor-log parsing, walking-segment trimming, and the study manifest.

File formats
------------
Sensor CSV        header ``timestamp_ms,x,y,z``; integer millisecond
                  timestamps, strictly increasing; decimal point ``.``.
Heart-rate CSV    header ``timestamp_ms,bpm``; rows with bpm outside
                  (20, 250) are excluded and counted, not errors.
Manifest JSON     ``{"participants": [{"id", "condition", "acc", "gyro",
                  "hr", "segments": [{"emotion", "start_ms", "end_ms"}]}]}``
                  with file paths resolved relative to the manifest.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, EmptySegmentError, ParseError

log = logging.getLogger(__name__)

EMOTIONS = ("happy", "neutral", "sad")
SENSOR_KINDS = ("accelerometer", "gyroscope")
CONDITIONS = (1, 2, 3)

BPM_MIN = 20.0
BPM_MAX = 250.0

_SENSOR_HEADER = ["timestamp_ms", "x", "y", "z"]
_HR_HEADER = ["timestamp_ms", "bpm"]


@dataclass
class SampleSeries:
    """Tri-axial sensor stream for one participant session.

    ``timestamps`` are integer milliseconds (strictly increasing),
    ``values`` is an (n, 3) float array of x/y/z readings.
    """

    sensor_kind: str
    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.sensor_kind not in SENSOR_KINDS:
            raise DataError(f"unknown sensor kind {self.sensor_kind!r}")
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.timestamps.ndim != 1:
            raise DataError("timestamps must be one-dimensional")
        n = self.timestamps.shape[0]
        if n == 0:
            raise DataError("empty sample series")
        if self.values.shape != (n, 3):
            raise DataError(f"values shape {self.values.shape} does not match {n} timestamps")
        steps = np.diff(self.timestamps)
        if steps.size and steps.min() <= 0:
            bad = int(self.timestamps[int(np.argmax(steps <= 0)) + 1])
            raise DataError(f"timestamps not strictly increasing at {bad} ms")
        if not np.all(np.isfinite(self.values)):
            raise DataError("non-finite sensor value")

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])

    @property
    def span_ms(self) -> int:
        return int(self.timestamps[-1] - self.timestamps[0])


@dataclass
class HeartRateSeries:
    """Heart-rate stream; ``n_excluded`` counts out-of-range rows dropped at parse time."""

    timestamps: np.ndarray
    bpm: np.ndarray
    n_excluded: int = 0

    def __post_init__(self) -> None:
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.bpm = np.asarray(self.bpm, dtype=np.float64)
        if self.timestamps.ndim != 1 or self.bpm.shape != self.timestamps.shape:
            raise DataError("heart-rate timestamps/bpm shape mismatch")
        if self.timestamps.shape[0] == 0:
            raise DataError("empty heart-rate series")
        if self.timestamps.shape[0] > 1 and np.diff(self.timestamps).min() <= 0:
            raise DataError("heart-rate timestamps not strictly increasing")
        if np.any(~np.isfinite(self.bpm)) or np.any(self.bpm <= BPM_MIN) or np.any(self.bpm >= BPM_MAX):
            raise DataError(f"bpm values must lie in ({BPM_MIN:g}, {BPM_MAX:g})")

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])


@dataclass(frozen=True)
class WalkSegment:
    """Labeled walking interval within a participant's recording."""

    participant_id: str
    condition: int
    emotion: str
    start_ms: int
    end_ms: int

    def __post_init__(self) -> None:
        if self.condition not in CONDITIONS:
            raise DataError(f"condition must be one of {CONDITIONS}, got {self.condition!r}")
        if self.emotion not in EMOTIONS:
            raise DataError(f"emotion must be one of {EMOTIONS}, got {self.emotion!r}")
        if not self.start_ms < self.end_ms:
            raise DataError(f"segment start {self.start_ms} must precede end {self.end_ms}")


@dataclass
class ParticipantEntry:
    participant_id: str
    condition: int
    acc_path: Path
    gyro_path: Path
    hr_path: Path
    segments: tuple[WalkSegment, ...]


@dataclass
class StudyManifest:
    participants: list[ParticipantEntry]


@dataclass
class ParticipantData:
    """All parsed streams for one participant."""

    entry: ParticipantEntry
    acc: SampleSeries
    gyro: SampleSeries
    hr: HeartRateSeries

    @property
    def participant_id(self) -> str:
        return self.entry.participant_id

    @property
    def condition(self) -> int:
        return self.entry.condition


def _read_rows(path: Path | str, header: list[str]):
    """Yield (lineno, row) pairs after validating the header; skips blank lines."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise ParseError(f"{path}: line 1: expected header {','.join(header)!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}")
            yield lineno, row


def parse_sensor_csv(path: Path | str, kind: str) -> SampleSeries:
    """Parse one tri-axial sensor log.

    Raises ParseError with the offending line number on malformed rows and
    DataError naming the timestamp when timestamps go backwards.
    """
    timestamps: list[int] = []
    values: list[tuple[float, float, float]] = []
    prev = None
    for lineno, row in _read_rows(path, _SENSOR_HEADER):
        try:
            t = int(row[0])
            xyz = (float(row[1]), float(row[2]), float(row[3]))
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
        if not all(math.isfinite(v) for v in xyz):
            raise ParseError(f"{path}: line {lineno}: non-finite sensor value")
        if prev is not None and t <= prev:
            raise DataError(f"{path}: line {lineno}: non-monotonic timestamp {t} ms (previous {prev} ms)")
        prev = t
        timestamps.append(t)
        values.append(xyz)
    if not timestamps:
        raise ParseError(f"{path}: no data rows")
    return SampleSeries(kind, np.array(timestamps), np.array(values))


def parse_heart_rate_csv(path: Path | str) -> HeartRateSeries:
    """Parse a heart-rate log, excluding (and counting) out-of-range bpm rows."""
    timestamps: list[int] = []
    bpm: list[float] = []
    excluded = 0
    prev = None
    for lineno, row in _read_rows(path, _HR_HEADER):
        try:
            t = int(row[0])
            b = float(row[1])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {exc}") from exc
        if not math.isfinite(b) or not (BPM_MIN < b < BPM_MAX):
            excluded += 1
            continue
        if prev is not None and t <= prev:
            raise DataError(f"{path}: line {lineno}: non-monotonic timestamp {t} ms (previous {prev} ms)")
        prev = t
        timestamps.append(t)
        bpm.append(b)
    if not timestamps:
        raise DataError(f"{path}: no valid heart-rate rows ({excluded} excluded)")
    return HeartRateSeries(np.array(timestamps), np.array(bpm), n_excluded=excluded)


def write_sensor_csv(series: SampleSeries, path: Path | str) -> None:
    """Write a series in the sensor CSV format; floats use repr so re-parsing is bit-exact."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_SENSOR_HEADER) + "\n")
        for t, (x, y, z) in zip(series.timestamps.tolist(), series.values.tolist()):
            fh.write(f"{t},{x!r},{y!r},{z!r}\n")


def write_heart_rate_csv(series: HeartRateSeries, path: Path | str) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(_HR_HEADER) + "\n")
        for t, b in zip(series.timestamps.tolist(), series.bpm.tolist()):
            fh.write(f"{t},{b!r}\n")


def trim_to_segment(series: SampleSeries, segment: WalkSegment) -> SampleSeries:
    """Samples with ``start_ms <= t <= end_ms``; a contiguous slice of the input."""
    lo = int(np.searchsorted(series.timestamps, segment.start_ms, side="left"))
    hi = int(np.searchsorted(series.timestamps, segment.end_ms, side="right"))
    if lo >= hi:
        raise EmptySegmentError(
            f"segment [{segment.start_ms}, {segment.end_ms}] ms has no samples "
            f"(series spans [{series.timestamps[0]}, {series.timestamps[-1]}] ms)"
        )
    return SampleSeries(series.sensor_kind, series.timestamps[lo:hi], series.values[lo:hi])


def estimate_sampling_rate(series: SampleSeries) -> float:
    """Average rate in Hz: (n - 1) / span-in-seconds."""
    if len(series) < 2:
        raise DataError("need at least 2 samples to estimate a sampling rate")
    return (len(series) - 1) / (series.span_ms / 1000.0)


def load_manifest(path: Path | str) -> StudyManifest:
    """Load a manifest JSON; stream paths are resolved relative to the manifest file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "participants" not in doc:
        raise ParseError(f"{path}: manifest must be an object with a 'participants' array")
    base = path.parent
    participants = []
    for raw in doc["participants"]:
        try:
            pid = str(raw["id"])
            condition = int(raw["condition"])
            seg_raw = raw["segments"]
            paths = {key: base / raw[key] for key in ("acc", "gyro", "hr")}
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}: malformed participant entry: {exc}") from exc
        segments = tuple(
            WalkSegment(pid, condition, str(s["emotion"]), int(s["start_ms"]), int(s["end_ms"]))
            for s in seg_raw
        )
        seen = [s.emotion for s in segments]
        if len(set(seen)) != len(seen):
            raise DataError(f"{path}: participant {pid}: more than one segment per emotion")
        participants.append(
            ParticipantEntry(pid, condition, paths["acc"], paths["gyro"], paths["hr"], segments)
        )
    return StudyManifest(participants)


def save_manifest(manifest: StudyManifest, path: Path | str) -> None:
    """Write a manifest with stream paths stored relative to the manifest location."""
    path = Path(path)
    base = path.parent
    doc = {
        "participants": [
            {
                "id": e.participant_id,
                "condition": e.condition,
                "acc": str(Path(e.acc_path).relative_to(base)),
                "gyro": str(Path(e.gyro_path).relative_to(base)),
                "hr": str(Path(e.hr_path).relative_to(base)),
                "segments": [
                    {"emotion": s.emotion, "start_ms": s.start_ms, "end_ms": s.end_ms}
                    for s in e.segments
                ],
            }
            for e in manifest.participants
        ]
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


@dataclass
class ExclusionRecord:
    participant_id: str
    reason: str


def load_study(manifest: StudyManifest) -> tuple[list[ParticipantData], list[ExclusionRecord]]:
    """Parse every participant's streams.

    Participants with a missing or unreadable stream are excluded with a
    logged reason rather than failing the whole study load.
    """
    loaded: list[ParticipantData] = []
    excluded: list[ExclusionRecord] = []
    for entry in manifest.participants:
        try:
            acc = parse_sensor_csv(entry.acc_path, "accelerometer")
            gyro = parse_sensor_csv(entry.gyro_path, "gyroscope")
            hr = parse_heart_rate_csv(entry.hr_path)
        except (OSError, ParseError, DataError) as exc:
            reason = f"{type(exc).__name__}: {exc}"
            log.warning("excluding participant %s: %s", entry.participant_id, reason)
            excluded.append(ExclusionRecord(entry.participant_id, reason))
            continue
        loaded.append(ParticipantData(entry, acc, gyro, hr))
    return loaded, excluded
