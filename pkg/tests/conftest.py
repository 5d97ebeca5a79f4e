import numpy as np
import pytest

from neuropref.core import (
    EEG_CHANNELS,
    EYE_CHANNELS,
    Category,
    Roi,
    SampleStream,
    Session,
    StimulusEvent,
    StreamKind,
    Trial,
)


def make_eeg_stream(n_seconds=60.0, rate=250.0, seed=0, start_us=0) -> SampleStream:
    rng = np.random.default_rng(seed)
    n = int(n_seconds * rate)
    return SampleStream(
        stream_id="eeg0",
        kind=StreamKind.EEG,
        channel_names=EEG_CHANNELS,
        sample_rate_hz=rate,
        start_timestamp_us=start_us,
        samples=rng.normal(0, 20.0, size=(n, 6)),
    )


def make_eye_stream(n_seconds=60.0, seed=1, start_us=0) -> SampleStream:
    rng = np.random.default_rng(seed)
    n = int(n_seconds * 60.0)
    samples = np.column_stack(
        [
            3.0 + 0.05 * rng.standard_normal(n),
            3.0 + 0.05 * rng.standard_normal(n),
            np.clip(0.5 + 0.01 * rng.standard_normal(n), 0, 1),
            np.clip(0.5 + 0.01 * rng.standard_normal(n), 0, 1),
            np.ones(n),
            np.ones(n),
        ]
    )
    return SampleStream(
        stream_id="eye0",
        kind=StreamKind.EYE,
        channel_names=EYE_CHANNELS,
        sample_rate_hz=60.0,
        start_timestamp_us=start_us,
        samples=samples,
    )


def make_event(event_id="ev1", t_us=2_000_000, rating=6, category=Category.FACE,
               luminance=0.5, rois=(), metadata=None) -> StimulusEvent:
    return StimulusEvent(
        event_id=event_id,
        timestamp_us=t_us,
        category=category,
        rating=rating,
        luminance=luminance,
        rois=tuple(rois),
        metadata=metadata or {},
    )


@pytest.fixture
def simple_session() -> Session:
    events = tuple(
        make_event(f"ev{i}", 2_000_000 + i * 3_000_000, rating=7 if i % 2 else 2)
        for i in range(8)
    )
    return Session(
        session_id="sess",
        subject_id="s01",
        streams=(make_eeg_stream(), make_eye_stream()),
        events=events,
        epoch_length_s=2.0,
    )


def make_eye_trial(
    gx, gy, pupil_left=None, pupil_right=None, valid=None, rate=60.0,
    event_id="t1", luminance=None,
) -> Trial:
    """Trial with a crafted eye epoch and a benign EEG epoch."""
    n = len(gx)
    pupil_left = np.full(n, 3.0) if pupil_left is None else np.asarray(pupil_left, float)
    pupil_right = pupil_left.copy() if pupil_right is None else np.asarray(pupil_right, float)
    valid = np.ones(n) if valid is None else np.asarray(valid, float)
    eye = np.column_stack([pupil_left, pupil_right, gx, gy, valid, valid])
    rng = np.random.default_rng(0)
    eeg = rng.normal(0, 20.0, size=(500, 6))
    return Trial(
        event_id=event_id,
        eeg_epoch=eeg,
        eye_epoch=eye,
        eeg_rate_hz=250.0,
        eye_rate_hz=rate,
        eye_channel_names=EYE_CHANNELS,
        luminance=luminance,
        category=Category.FACE,
    )
