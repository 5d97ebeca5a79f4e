"""Domain types and event-based time synchronization.

Sensor data arrives as uniform-rate streams on one shared microsecond
clock; stimulus events carry arbitrary timestamps. Epoch extraction
aligns each stream to an event by binary search for the first sample at
or after the event time, producing one :class:`Trial` per stimulus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import MissingStreamError, OutOfRangeError

EEG_CHANNELS = ("Fp1", "Fp2", "AF3", "AF4", "AF7", "AF8")
EYE_CHANNELS = (
    "pupil_left_mm",
    "pupil_right_mm",
    "gaze_x",
    "gaze_y",
    "valid_left",
    "valid_right",
)
EEG_RATES_HZ = (250.0, 500.0)
EYE_RATE_HZ = 60.0

RATING_MIN = 1
RATING_MAX = 7
DEFAULT_LIKE_THRESHOLD = 5
DEFAULT_EPOCH_LENGTH_S = 2.0

#: NaN runs up to this length are linearly interpolated at ingest;
#: anything longer is an ingest error.
MAX_INTERPOLATED_GAP = 3


class StreamKind(str, Enum):
    EEG = "eeg"
    EYE = "eye"


class Category(str, Enum):
    FACE = "face"
    CLOTH = "cloth"
    COLOR = "color"
    COMPOSITE = "composite"
    OTHER = "other"


class BinaryLabel(str, Enum):
    LIKE = "like"
    DISLIKE = "dislike"


class QualityFlag(str, Enum):
    EEG_GAP = "eeg_gap"
    EYE_GAP = "eye_gap"
    CLIPPED = "clipped"
    OUT_OF_SPAN = "out_of_span"


#: EEG magnitudes above this are treated as a railed sensor (sets CLIPPED).
CLIP_LIMIT_UV = 500.0


@dataclass(frozen=True)
class Roi:
    """Axis-aligned rectangle in normalized screen coordinates.

    Points exactly on the boundary count as inside (closed rectangle).
    """

    name: str
    x: float
    y: float
    w: float
    h: float

    def contains(self, px: float, py: float) -> bool:
        return self.x <= px <= self.x + self.w and self.y <= py <= self.y + self.h

    def within_unit_square(self) -> bool:
        return (
            0.0 <= self.x
            and 0.0 <= self.y
            and self.x + self.w <= 1.0
            and self.y + self.h <= 1.0
            and self.w >= 0.0
            and self.h >= 0.0
        )


@dataclass(frozen=True)
class SampleStream:
    """One sensor's timestamped, uniform-rate channel data.

    The timestamp of sample ``i`` is ``start_timestamp_us + i / rate``
    rounded to integer microseconds; streams never store per-sample
    timestamps in memory.
    """

    stream_id: str
    kind: StreamKind
    channel_names: tuple[str, ...]
    sample_rate_hz: float
    start_timestamp_us: int
    samples: np.ndarray  # [n_samples, n_channels] float64

    @property
    def n_samples(self) -> int:
        return int(self.samples.shape[0])

    @property
    def n_channels(self) -> int:
        return int(self.samples.shape[1])

    def timestamp_us(self, index: int) -> int:
        """Integer-microsecond timestamp of sample ``index``."""
        return self.start_timestamp_us + round(index * 1_000_000.0 / self.sample_rate_hz)

    @property
    def end_timestamp_us(self) -> int:
        """Timestamp one sample past the last (exclusive span end)."""
        return self.timestamp_us(self.n_samples)

    def index_at_or_after(self, t_us: int) -> int:
        """First sample index whose timestamp is >= ``t_us``.

        Binary search over the implied timestamp grid; may return
        ``n_samples`` when the event lies past the stream end.
        """
        if t_us <= self.start_timestamp_us:
            return 0
        lo, hi = 0, self.n_samples
        while lo < hi:
            mid = (lo + hi) // 2
            if self.timestamp_us(mid) >= t_us:
                hi = mid
            else:
                lo = mid + 1
        return lo

    def with_samples(self, samples: np.ndarray) -> "SampleStream":
        """Copy of this stream with replaced sample data (same geometry)."""
        if samples.shape != self.samples.shape:
            raise ValueError(
                f"replacement samples shape {samples.shape} != {self.samples.shape}"
            )
        return SampleStream(
            stream_id=self.stream_id,
            kind=self.kind,
            channel_names=self.channel_names,
            sample_rate_hz=self.sample_rate_hz,
            start_timestamp_us=self.start_timestamp_us,
            samples=samples,
        )

    def equals(self, other: "SampleStream") -> bool:
        return (
            self.stream_id == other.stream_id
            and self.kind == other.kind
            and self.channel_names == other.channel_names
            and self.sample_rate_hz == other.sample_rate_hz
            and self.start_timestamp_us == other.start_timestamp_us
            and self.samples.shape == other.samples.shape
            and bool(np.array_equal(self.samples, other.samples))
        )


@dataclass(frozen=True)
class StimulusEvent:
    event_id: str
    timestamp_us: int
    category: Category
    rating: int | None = None
    binary_label: BinaryLabel | None = None
    luminance: float | None = None
    rois: tuple[Roi, ...] = ()
    metadata: dict[str, str] = field(default_factory=dict)

    def label(self, threshold: int = DEFAULT_LIKE_THRESHOLD) -> BinaryLabel | None:
        """Explicit binary label if present, else the binarized rating."""
        if self.binary_label is not None:
            return self.binary_label
        if self.rating is not None:
            return binarize_label(self.rating, threshold)
        return None


@dataclass(frozen=True)
class Session:
    session_id: str
    subject_id: str
    streams: tuple[SampleStream, ...]
    events: tuple[StimulusEvent, ...]
    epoch_length_s: float = DEFAULT_EPOCH_LENGTH_S

    def stream_of(self, kind: StreamKind) -> SampleStream:
        for s in self.streams:
            if s.kind == kind:
                return s
        raise MissingStreamError(f"session {self.session_id!r} has no {kind.value} stream")

    def has_stream(self, kind: StreamKind) -> bool:
        return any(s.kind == kind for s in self.streams)

    def with_streams(self, streams: tuple[SampleStream, ...]) -> "Session":
        return Session(
            session_id=self.session_id,
            subject_id=self.subject_id,
            streams=streams,
            events=self.events,
            epoch_length_s=self.epoch_length_s,
        )

    def equals(self, other: "Session") -> bool:
        return (
            self.session_id == other.session_id
            and self.subject_id == other.subject_id
            and self.epoch_length_s == other.epoch_length_s
            and len(self.streams) == len(other.streams)
            and all(a.equals(b) for a, b in zip(self.streams, other.streams))
            and self.events == other.events
        )


@dataclass(frozen=True)
class Trial:
    """One stimulus's synchronized sensor epochs plus label."""

    event_id: str
    eeg_epoch: np.ndarray  # [n_eeg, 6]
    eye_epoch: np.ndarray  # [n_eye, n_eye_channels]
    eeg_rate_hz: float
    eye_rate_hz: float
    eye_channel_names: tuple[str, ...]
    label: BinaryLabel | None = None
    quality_flags: frozenset[QualityFlag] = frozenset()
    luminance: float | None = None
    category: Category = Category.OTHER

    def with_eye_epoch(self, eye_epoch: np.ndarray) -> "Trial":
        return Trial(
            event_id=self.event_id,
            eeg_epoch=self.eeg_epoch,
            eye_epoch=eye_epoch,
            eeg_rate_hz=self.eeg_rate_hz,
            eye_rate_hz=self.eye_rate_hz,
            eye_channel_names=self.eye_channel_names,
            label=self.label,
            quality_flags=self.quality_flags,
            luminance=self.luminance,
            category=self.category,
        )

    def with_flags(self, extra: set[QualityFlag]) -> "Trial":
        return Trial(
            event_id=self.event_id,
            eeg_epoch=self.eeg_epoch,
            eye_epoch=self.eye_epoch,
            eeg_rate_hz=self.eeg_rate_hz,
            eye_rate_hz=self.eye_rate_hz,
            eye_channel_names=self.eye_channel_names,
            label=self.label,
            quality_flags=frozenset(self.quality_flags | extra),
            luminance=self.luminance,
            category=self.category,
        )


@dataclass(frozen=True)
class Diagnostic:
    """One invariant violation found by :func:`validate_session`."""

    code: str
    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} @ {self.location}: {self.message}"


def binarize_label(rating: int, threshold: int = DEFAULT_LIKE_THRESHOLD) -> BinaryLabel:
    """Map a 1-7 rating to like/dislike: like iff rating >= threshold."""
    if not (RATING_MIN <= rating <= RATING_MAX):
        raise OutOfRangeError(f"rating {rating} outside [{RATING_MIN}, {RATING_MAX}]")
    return BinaryLabel.LIKE if rating >= threshold else BinaryLabel.DISLIKE


def _epoch_window(
    stream: SampleStream, t_event_us: int, epoch_length_s: float
) -> tuple[np.ndarray, bool]:
    """Window [t_event, t_event + epoch_length) from a stream.

    Returns (window, out_of_span); the window is truncated when it
    extends past either stream edge.
    """
    n_expected = round(epoch_length_s * stream.sample_rate_hz)
    i0 = stream.index_at_or_after(t_event_us)
    i1 = i0 + n_expected
    out_of_span = t_event_us < stream.start_timestamp_us or i1 > stream.n_samples
    i1 = min(i1, stream.n_samples)
    return stream.samples[i0:i1], out_of_span


def epoch_extract(session: Session, event: StimulusEvent) -> Trial:
    """Extract the synchronized EEG + eye epoch for one event.

    Window alignment is first-sample-at-or-after-event with no
    sub-sample interpolation. Truncated windows set OUT_OF_SPAN rather
    than raising; NaNs in a window set the corresponding gap flag.
    """
    if not session.streams:
        raise MissingStreamError("session has no streams")
    if session.epoch_length_s <= 0:
        raise OutOfRangeError(f"epoch_length_s must be > 0, got {session.epoch_length_s}")
    eeg = session.stream_of(StreamKind.EEG)
    eye = session.stream_of(StreamKind.EYE)

    eeg_epoch, eeg_oos = _epoch_window(eeg, event.timestamp_us, session.epoch_length_s)
    eye_epoch, eye_oos = _epoch_window(eye, event.timestamp_us, session.epoch_length_s)

    flags: set[QualityFlag] = set()
    if eeg_oos or eye_oos:
        flags.add(QualityFlag.OUT_OF_SPAN)
    if np.isnan(eeg_epoch).any():
        flags.add(QualityFlag.EEG_GAP)
    if np.isnan(eye_epoch).any():
        flags.add(QualityFlag.EYE_GAP)
    if eeg_epoch.size and np.nanmax(np.abs(eeg_epoch)) > CLIP_LIMIT_UV:
        flags.add(QualityFlag.CLIPPED)

    return Trial(
        event_id=event.event_id,
        eeg_epoch=eeg_epoch,
        eye_epoch=eye_epoch,
        eeg_rate_hz=eeg.sample_rate_hz,
        eye_rate_hz=eye.sample_rate_hz,
        eye_channel_names=eye.channel_names,
        label=event.label(),
        quality_flags=frozenset(flags),
        luminance=event.luminance,
        category=event.category,
    )


def validate_session(session: Session, allow_any_rate: bool = False) -> list[Diagnostic]:
    """Collect every invariant violation in a session; never mutates.

    Events outside a stream span are flagged here, not dropped.
    """
    diags: list[Diagnostic] = []

    if session.epoch_length_s <= 0:
        diags.append(
            Diagnostic("epoch", "session", f"epoch_length_s={session.epoch_length_s} not > 0")
        )
    for kind in (StreamKind.EEG, StreamKind.EYE):
        if not session.has_stream(kind):
            diags.append(Diagnostic("stream", "session", f"missing {kind.value} stream"))

    for s in session.streams:
        loc = f"stream:{s.stream_id}"
        if s.kind == StreamKind.EEG:
            if not allow_any_rate and s.sample_rate_hz not in EEG_RATES_HZ:
                diags.append(
                    Diagnostic("rate", loc, f"EEG rate {s.sample_rate_hz} Hz not in {EEG_RATES_HZ}")
                )
            if s.channel_names != EEG_CHANNELS:
                diags.append(
                    Diagnostic(
                        "channels", loc, f"EEG channels {s.channel_names} != {EEG_CHANNELS}"
                    )
                )
        elif s.kind == StreamKind.EYE:
            if not allow_any_rate and s.sample_rate_hz != EYE_RATE_HZ:
                diags.append(
                    Diagnostic("rate", loc, f"eye rate {s.sample_rate_hz} Hz != {EYE_RATE_HZ}")
                )
        if s.sample_rate_hz <= 0:
            diags.append(Diagnostic("rate", loc, f"non-positive rate {s.sample_rate_hz}"))
        if s.samples.ndim != 2 or s.samples.shape[1] != len(s.channel_names):
            diags.append(
                Diagnostic(
                    "shape", loc, f"samples {s.samples.shape} vs {len(s.channel_names)} channels"
                )
            )
        elif np.isnan(s.samples).any():
            bad = int(np.isnan(s.samples).sum())
            diags.append(Diagnostic("nan", loc, f"{bad} NaN samples after ingest"))

    seen_ids: set[str] = set()
    prev_t: int | None = None
    for ev in session.events:
        loc = f"event:{ev.event_id}"
        if ev.event_id in seen_ids:
            diags.append(Diagnostic("event_id", loc, "duplicate event id"))
        seen_ids.add(ev.event_id)
        if prev_t is not None and ev.timestamp_us < prev_t:
            diags.append(Diagnostic("order", loc, "events not time-ordered"))
        prev_t = ev.timestamp_us
        if ev.rating is not None and not (RATING_MIN <= ev.rating <= RATING_MAX):
            diags.append(Diagnostic("rating", loc, f"rating {ev.rating} outside 1..7"))
        if ev.luminance is not None and not (0.0 <= ev.luminance <= 1.0):
            diags.append(Diagnostic("luminance", loc, f"luminance {ev.luminance} outside [0,1]"))
        roi_names = [r.name for r in ev.rois]
        if len(set(roi_names)) != len(roi_names):
            diags.append(Diagnostic("roi", loc, "duplicate ROI names"))
        for r in ev.rois:
            if not r.within_unit_square():
                diags.append(Diagnostic("roi", loc, f"ROI {r.name!r} outside unit square"))
        epoch_us = math.ceil(session.epoch_length_s * 1_000_000)
        for s in session.streams:
            if not (s.start_timestamp_us <= ev.timestamp_us
                    and ev.timestamp_us + epoch_us <= s.end_timestamp_us):
                diags.append(
                    Diagnostic(
                        "span",
                        loc,
                        f"epoch window not contained in stream {s.stream_id!r} span",
                    )
                )
    return diags
