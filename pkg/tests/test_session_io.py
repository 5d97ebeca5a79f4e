import numpy as np
import pytest

from conftest import make_eeg_stream, make_event, make_eye_stream

from neuropref.core import Category, Roi, Session, StimulusEvent
from neuropref.errors import IngestError
from neuropref.session_io import load_session, save_session


@pytest.fixture
def rich_session() -> Session:
    events = (
        StimulusEvent(
            "e1", 2_000_000, Category.COMPOSITE, rating=6, luminance=0.4,
            rois=(Roi("face", 0.3, 0.05, 0.4, 0.35), Roi("color", 0.0, 0.0, 0.25, 1.0)),
            metadata={"viewer_sex": "female", "image_sex": "male"},
        ),
        StimulusEvent("e2", 5_000_000, Category.COLOR, rating=2, luminance=0.8),
        StimulusEvent("e3", 8_000_000, Category.FACE),  # unrated
    )
    return Session(
        session_id="rich",
        subject_id="p07",
        streams=(make_eeg_stream(n_seconds=15.0), make_eye_stream(n_seconds=15.0)),
        events=events,
        epoch_length_s=2.0,
    )


def test_round_trip_is_field_for_field_equal(tmp_path, rich_session):
    save_session(rich_session, tmp_path / "sess")
    loaded = load_session(tmp_path / "sess")
    assert rich_session.equals(loaded)


def test_expected_files_and_headers(tmp_path, rich_session):
    d = save_session(rich_session, tmp_path / "sess")
    assert (d / "session.json").exists()
    assert (d / "events.jsonl").read_text().count("\n") == 3
    eeg_header = (d / "eeg.csv").read_text().splitlines()[0]
    assert eeg_header == "timestamp_us,Fp1,Fp2,AF3,AF4,AF7,AF8"
    eye_header = (d / "eye.csv").read_text().splitlines()[0]
    assert eye_header == (
        "timestamp_us,pupil_left_mm,pupil_right_mm,gaze_x,gaze_y,valid_left,valid_right"
    )


def test_short_nan_runs_are_interpolated(tmp_path, rich_session):
    d = save_session(rich_session, tmp_path / "sess")
    lines = (d / "eeg.csv").read_text().splitlines()
    # blank out Fp1 on rows 10-12 (3-sample run)
    for i in (11, 12, 13):
        parts = lines[i].split(",")
        parts[1] = ""
        lines[i] = ",".join(parts)
    (d / "eeg.csv").write_text("\n".join(lines) + "\n")
    loaded = load_session(d)
    x = loaded.streams[0].samples[:, 0]
    assert np.isfinite(x).all()
    expected = np.interp([10, 11, 12], [9, 13], [x[9], x[13]])
    assert np.allclose(x[10:13], expected)


def test_long_nan_run_is_an_ingest_error(tmp_path, rich_session):
    d = save_session(rich_session, tmp_path / "sess")
    lines = (d / "eeg.csv").read_text().splitlines()
    for i in range(11, 16):  # 5-sample run
        parts = lines[i].split(",")
        parts[1] = ""
        lines[i] = ",".join(parts)
    (d / "eeg.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(IngestError, match="NaN run"):
        load_session(d)


def test_nonstandard_rate_rejected_unless_allowed(tmp_path, rich_session):
    bad = rich_session.with_streams(
        (make_eeg_stream(n_seconds=15.0, rate=300.0), rich_session.streams[1])
    )
    d = save_session(bad, tmp_path / "sess")
    with pytest.raises(IngestError, match="rate"):
        load_session(d)
    loaded = load_session(d, allow_any_rate=True)
    assert loaded.streams[0].sample_rate_hz == 300.0


def test_corrupted_timestamps_rejected(tmp_path, rich_session):
    d = save_session(rich_session, tmp_path / "sess")
    lines = (d / "eeg.csv").read_text().splitlines()
    parts = lines[5].split(",")
    parts[0] = str(int(parts[0]) + 7)
    lines[5] = ",".join(parts)
    (d / "eeg.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(IngestError, match="grid"):
        load_session(d)


def test_not_a_session_dir(tmp_path):
    with pytest.raises(IngestError, match="session directory"):
        load_session(tmp_path)
