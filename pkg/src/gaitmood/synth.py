"""Seeded synthetic-walk generator: the pipeline's dataset-free oracle.

Each axis is a sinusoid at the emotion's cadence (axis phases 0, 2pi/3,
4pi/3) evaluated at the actual integer-millisecond timestamps, plus Gaussian
noise drawn by inverse CDF from a seeded stream, so regeneration from the
same seed is bit-identical. Separability between emotions is controlled by
cadence, amplitude, and heart-rate parameters; identical per-emotion
parameters produce chance-level data by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError
from .ingest import (
    EMOTIONS,
    HeartRateSeries,
    ParticipantEntry,
    SampleSeries,
    StudyManifest,
    WalkSegment,
    save_manifest,
    write_heart_rate_csv,
    write_sensor_csv,
)
from .rng import generator, mix64

_AXIS_PHASES = np.array([0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0])

# keep generated bpm inside the parser's validity range
_BPM_LO, _BPM_HI = 20.5, 249.5


@dataclass(frozen=True)
class EmotionParams:
    """Gait signature of one emotion."""

    cadence_hz: float
    acc_amplitude: float
    gyro_amplitude: float
    noise_std: float
    hr_mean: float
    hr_std: float

    def __post_init__(self) -> None:
        if self.cadence_hz <= 0:
            raise ConfigError(f"cadence must be > 0, got {self.cadence_hz}")
        if self.noise_std < 0 or self.hr_std < 0:
            raise ConfigError("noise and heart-rate std must be >= 0")


@dataclass(frozen=True)
class SynthParams:
    """Study-level generator settings."""

    emotions: dict[str, EmotionParams]
    duration_s: float = 120.0
    rate_hz: float = 23.8
    n_participants: int = 5
    seed: int = 0

    def __post_init__(self) -> None:
        if set(self.emotions) != set(EMOTIONS):
            raise ConfigError(f"emotion params must cover exactly {EMOTIONS}")
        if self.rate_hz <= 0:
            raise ConfigError(f"sampling rate must be > 0, got {self.rate_hz}")
        if round(self.duration_s * self.rate_hz) < 24:
            raise ConfigError("duration too short for even one 24-sample window")
        if self.n_participants < 1:
            raise ConfigError("need at least one participant")


def separable_params(n_participants: int = 5, duration_s: float = 120.0, seed: int = 0) -> SynthParams:
    """Emotions with distinct cadences/amplitudes and study-scale heart rates."""
    return SynthParams(
        emotions={
            "happy": EmotionParams(2.2, 1.4, 0.9, 0.25, 104.43, 14.55),
            "neutral": EmotionParams(1.9, 1.1, 0.7, 0.25, 105.77, 14.50),
            "sad": EmotionParams(1.6, 0.8, 0.5, 0.25, 91.68, 16.31),
        },
        duration_s=duration_s,
        n_participants=n_participants,
        seed=seed,
    )


def identical_params(n_participants: int = 5, duration_s: float = 120.0, seed: int = 0) -> SynthParams:
    """Every emotion shares one gait signature: downstream accuracy must be chance."""
    shared = EmotionParams(1.9, 1.0, 0.7, 0.3, 100.0, 10.0)
    return SynthParams(
        emotions={e: shared for e in EMOTIONS},
        duration_s=duration_s,
        n_participants=n_participants,
        seed=seed,
    )


def _gaussian(rng: np.random.Generator, size) -> np.ndarray:
    """Inverse-CDF normals; uniforms clipped away from 0 to keep ndtri finite."""
    u = rng.random(size)
    return ndtri(np.clip(u, 1e-300, 1.0 - 1e-16))


def generate_walk(
    params: SynthParams, emotion: str, walk_seed: int, start_ms: int = 0
) -> tuple[SampleSeries, SampleSeries, HeartRateSeries]:
    """One labeled walk: accelerometer, gyroscope, and 1 Hz heart rate."""
    ep = params.emotions[emotion]
    n = int(round(params.duration_s * params.rate_hz))
    timestamps = start_ms + np.round(np.arange(n) * (1000.0 / params.rate_hz)).astype(np.int64)
    t_s = timestamps / 1000.0
    phase = 2.0 * np.pi * ep.cadence_hz * t_s[:, None] + _AXIS_PHASES[None, :]
    wave = np.sin(phase)
    rng = generator(walk_seed)
    acc_values = ep.acc_amplitude * wave
    if ep.noise_std > 0:
        acc_values = acc_values + ep.noise_std * _gaussian(rng, (n, 3))
    gyro_values = ep.gyro_amplitude * np.cos(phase)
    if ep.noise_std > 0:
        gyro_values = gyro_values + ep.noise_std * _gaussian(rng, (n, 3))
    n_hr = max(2, int(params.duration_s) + 1)
    hr_ts = start_ms + 1000 * np.arange(n_hr, dtype=np.int64)
    bpm = np.clip(ep.hr_mean + ep.hr_std * _gaussian(rng, n_hr), _BPM_LO, _BPM_HI)
    return (
        SampleSeries("accelerometer", timestamps, acc_values),
        SampleSeries("gyroscope", timestamps, gyro_values),
        HeartRateSeries(hr_ts, bpm),
    )


def generate_study(params: SynthParams, out_dir: Path | str) -> tuple[Path, StudyManifest]:
    """Write a full synthetic study (sensor CSVs plus manifest) to ``out_dir``.

    One participant per derived seed, three walks (happy, neutral, sad in
    time order) separated by 10 s gaps, concatenated into one stream per
    sensor the way a real recording session would be.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    gap_ms = 10_000
    entries = []
    for p in range(params.n_participants):
        pid = f"synth{p:02d}"
        condition = p % 3 + 1
        acc_parts, gyro_parts, hr_parts, segments = [], [], [], []
        cursor = 0
        for emotion in EMOTIONS:
            walk_seed = mix64(params.seed, pid, emotion)
            acc, gyro, hr = generate_walk(params, emotion, walk_seed, start_ms=cursor)
            acc_parts.append(acc)
            gyro_parts.append(gyro)
            hr_parts.append(hr)
            segments.append(
                WalkSegment(pid, condition, emotion, int(acc.timestamps[0]), int(acc.timestamps[-1]))
            )
            cursor = int(max(acc.timestamps[-1], hr.timestamps[-1])) + gap_ms
        acc_path = out_dir / f"{pid}_acc.csv"
        gyro_path = out_dir / f"{pid}_gyro.csv"
        hr_path = out_dir / f"{pid}_hr.csv"
        write_sensor_csv(_concat_series(acc_parts), acc_path)
        write_sensor_csv(_concat_series(gyro_parts), gyro_path)
        write_heart_rate_csv(_concat_hr(hr_parts), hr_path)
        entries.append(ParticipantEntry(pid, condition, acc_path, gyro_path, hr_path, tuple(segments)))
    manifest = StudyManifest(entries)
    manifest_path = out_dir / "manifest.json"
    save_manifest(manifest, manifest_path)
    return manifest_path, manifest


def _concat_series(parts: list[SampleSeries]) -> SampleSeries:
    return SampleSeries(
        parts[0].sensor_kind,
        np.concatenate([p.timestamps for p in parts]),
        np.concatenate([p.values for p in parts]),
    )


def _concat_hr(parts: list[HeartRateSeries]) -> HeartRateSeries:
    return HeartRateSeries(
        np.concatenate([p.timestamps for p in parts]),
        np.concatenate([p.bpm for p in parts]),
    )
