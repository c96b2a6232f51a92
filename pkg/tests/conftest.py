import numpy as np
import pytest

from gaitmood import features, ingest, preprocess, synth


def make_series(values, kind="accelerometer", t0=0, step_ms=42):
    values = np.asarray(values, dtype=np.float64)
    ts = t0 + step_ms * np.arange(values.shape[0], dtype=np.int64)
    return ingest.SampleSeries(kind, ts, values)


def make_axis_series(x, kind="accelerometer", **kwargs):
    """Series whose x-axis is ``x`` and whose other axes are zero."""
    x = np.asarray(x, dtype=np.float64)
    return make_series(np.column_stack([x, np.zeros_like(x), np.zeros_like(x)]), kind, **kwargs)


def make_bundle(acc, gyro=None, hr_bpm=80.0, emotion="happy", participant="p1", condition=1, index=0):
    acc = np.asarray(acc, dtype=np.float64)
    gyro = acc.copy() if gyro is None else np.asarray(gyro, dtype=np.float64)
    return preprocess.WindowBundle(
        window_index=index,
        acc=acc,
        gyro=gyro,
        hr_bpm=hr_bpm,
        emotion=emotion,
        participant_id=participant,
        condition=condition,
        start_ms=0,
        end_ms=1000,
    )


@pytest.fixture(scope="session")
def small_study(tmp_path_factory):
    """Separable synthetic study: 3 participants, 60 s per emotion."""
    out = tmp_path_factory.mktemp("study")
    params = synth.separable_params(n_participants=3, duration_s=60.0, seed=20240501)
    manifest_path, _ = synth.generate_study(params, out)
    return manifest_path


@pytest.fixture(scope="session")
def small_table(small_study):
    """107-feature table for the small synthetic study."""
    manifest = ingest.load_manifest(small_study)
    participants, excluded = ingest.load_study(manifest)
    assert not excluded
    bundles, drops = preprocess.study_windows(participants)
    assert drops.total == 0
    return features.featurize(bundles, "acc_gyro_hr")
