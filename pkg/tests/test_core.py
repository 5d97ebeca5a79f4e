import numpy as np
import pytest

from conftest import make_eeg_stream, make_event, make_eye_stream

from neuropref.core import (
    BinaryLabel,
    Category,
    QualityFlag,
    Roi,
    SampleStream,
    Session,
    StimulusEvent,
    StreamKind,
    binarize_label,
    epoch_extract,
    validate_session,
)
from neuropref.errors import MissingStreamError, OutOfRangeError


class TestBinarizeLabel:
    def test_max_rating_is_like(self):
        assert binarize_label(7) == BinaryLabel.LIKE

    def test_min_rating_is_dislike(self):
        assert binarize_label(1) == BinaryLabel.DISLIKE

    def test_threshold_boundary_is_like(self):
        assert binarize_label(5, threshold=5) == BinaryLabel.LIKE

    def test_below_threshold_is_dislike(self):
        assert binarize_label(4, threshold=5) == BinaryLabel.DISLIKE

    @pytest.mark.parametrize("rating", [0, 8, -1])
    def test_out_of_range(self, rating):
        with pytest.raises(OutOfRangeError):
            binarize_label(rating)


class TestEpochExtract:
    def test_eeg_epoch_row_count_250hz(self, simple_session):
        trial = epoch_extract(simple_session, simple_session.events[0])
        assert trial.eeg_epoch.shape == (500, 6)  # 2 s x 250 Hz

    def test_eye_epoch_row_count_60hz(self, simple_session):
        trial = epoch_extract(simple_session, simple_session.events[0])
        assert trial.eye_epoch.shape[0] == 120  # 2 s x 60 Hz

    def test_eeg_epoch_row_count_500hz(self):
        session = Session(
            "s", "p",
            streams=(make_eeg_stream(rate=500.0), make_eye_stream()),
            events=(make_event(),),
        )
        trial = epoch_extract(session, session.events[0])
        assert trial.eeg_epoch.shape[0] == 1000

    def test_event_near_stream_end_truncates_and_flags(self, simple_session):
        eeg = simple_session.stream_of(StreamKind.EEG)
        late = make_event("late", eeg.end_timestamp_us - 500_000)  # 0.5 s before end
        trial = epoch_extract(simple_session, late)
        assert QualityFlag.OUT_OF_SPAN in trial.quality_flags
        assert trial.eeg_epoch.shape[0] == 125  # 0.5 s x 250 Hz

    def test_missing_stream_raises(self, simple_session):
        session = Session("s", "p", streams=(simple_session.streams[0],),
                          events=simple_session.events)
        with pytest.raises(MissingStreamError):
            epoch_extract(session, session.events[0])

    def test_label_comes_from_rating(self, simple_session):
        trial = epoch_extract(simple_session, simple_session.events[1])  # rating 7
        assert trial.label == BinaryLabel.LIKE

    def test_purity_identical_inputs_identical_trials(self, simple_session):
        a = epoch_extract(simple_session, simple_session.events[0])
        b = epoch_extract(simple_session, simple_session.events[0])
        assert np.array_equal(a.eeg_epoch, b.eeg_epoch)
        assert np.array_equal(a.eye_epoch, b.eye_epoch)
        assert a.quality_flags == b.quality_flags

    def test_consecutive_epochs_tile_the_stream_exactly(self):
        """Concatenating back-to-back epochs reproduces the raw slice."""
        eeg = make_eeg_stream(n_seconds=20.0)
        eye = make_eye_stream(n_seconds=20.0)
        events = tuple(make_event(f"e{k}", 2_000_000 + k * 2_000_000) for k in range(5))
        session = Session("s", "p", streams=(eeg, eye), events=events)
        for stream, attr in ((eeg, "eeg_epoch"), (eye, "eye_epoch")):
            epochs = [getattr(epoch_extract(session, ev), attr) for ev in events]
            tiled = np.vstack(epochs)
            i0 = stream.index_at_or_after(2_000_000)
            assert np.array_equal(tiled, stream.samples[i0 : i0 + len(tiled)])

    def test_alignment_uses_first_sample_at_or_after(self):
        eeg = make_eeg_stream(n_seconds=10.0)
        eye = make_eye_stream(n_seconds=10.0)
        session = Session("s", "p", streams=(eeg, eye), events=())
        # 1 us past a sample time must move to the next sample
        trial_on = epoch_extract(session, make_event("a", 2_000_000))
        trial_past = epoch_extract(session, make_event("b", 2_000_001))
        assert np.array_equal(trial_past.eeg_epoch[0], eeg.samples[501])
        assert np.array_equal(trial_on.eeg_epoch[0], eeg.samples[500])


class TestValidateSession:
    def test_well_formed_session_is_clean(self, simple_session):
        assert validate_session(simple_session) == []

    def test_nonstandard_eeg_rate_is_flagged(self, simple_session):
        bad = make_eeg_stream(rate=300.0)
        session = simple_session.with_streams((bad, simple_session.streams[1]))
        codes = {d.code for d in validate_session(session)}
        assert "rate" in codes

    def test_allow_any_rate_suppresses_rate_diag(self, simple_session):
        bad = make_eeg_stream(rate=300.0)
        session = simple_session.with_streams((bad, simple_session.streams[1]))
        codes = {d.code for d in validate_session(session, allow_any_rate=True)}
        assert "rate" not in codes

    def test_event_outside_span_is_flagged_not_dropped(self, simple_session):
        events = simple_session.events + (make_event("faroff", 10**9),)
        session = Session("s", "p", simple_session.streams, events)
        diags = validate_session(session)
        assert any(d.code == "span" and "faroff" in d.location for d in diags)

    def test_bad_rating_and_roi(self):
        ev = StimulusEvent(
            "e1", 2_000_000, Category.FACE, rating=9,
            rois=(Roi("a", 0.9, 0.9, 0.5, 0.5), Roi("a", 0, 0, 1, 1)),
        )
        session = Session(
            "s", "p", streams=(make_eeg_stream(), make_eye_stream()), events=(ev,)
        )
        codes = [d.code for d in validate_session(session)]
        assert "rating" in codes
        assert codes.count("roi") == 2  # duplicate name + out of square

    def test_wrong_channel_order_is_flagged(self, simple_session):
        eeg = simple_session.stream_of(StreamKind.EEG)
        shuffled = SampleStream(
            eeg.stream_id, eeg.kind,
            tuple(reversed(eeg.channel_names)),
            eeg.sample_rate_hz, eeg.start_timestamp_us, eeg.samples,
        )
        session = simple_session.with_streams((shuffled, simple_session.streams[1]))
        assert any(d.code == "channels" for d in validate_session(session))

    def test_validate_never_mutates(self, simple_session):
        before = simple_session.streams[0].samples.copy()
        validate_session(simple_session)
        assert np.array_equal(simple_session.streams[0].samples, before)
