"""Session directory serialization.

On disk a session is a directory of four files:

* ``eeg.csv``    header ``timestamp_us,Fp1,Fp2,AF3,AF4,AF7,AF8``
* ``eye.csv``    header ``timestamp_us,pupil_left_mm,pupil_right_mm,gaze_x,gaze_y,valid_left,valid_right``
* ``events.jsonl``  one stimulus event per line
* ``session.json``  ids, stream geometry, epoch length

Floats are written with Python's shortest round-trip repr so that
save -> load reproduces the session field-for-field.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd

from .core import (
    EEG_CHANNELS,
    EYE_CHANNELS,
    EEG_RATES_HZ,
    EYE_RATE_HZ,
    MAX_INTERPOLATED_GAP,
    BinaryLabel,
    Category,
    Roi,
    SampleStream,
    Session,
    StimulusEvent,
    StreamKind,
)
from .errors import IngestError

EEG_FILE = "eeg.csv"
EYE_FILE = "eye.csv"
EVENTS_FILE = "events.jsonl"
META_FILE = "session.json"


def _timestamp_column(stream: SampleStream) -> np.ndarray:
    idx = np.arange(stream.n_samples, dtype=np.float64)
    return stream.start_timestamp_us + np.round(idx * 1_000_000.0 / stream.sample_rate_hz).astype(
        np.int64
    )


def _event_to_dict(ev: StimulusEvent) -> dict:
    return {
        "event_id": ev.event_id,
        "timestamp_us": ev.timestamp_us,
        "category": ev.category.value,
        "rating": ev.rating,
        "binary_label": ev.binary_label.value if ev.binary_label else None,
        "luminance": ev.luminance,
        "rois": [{"name": r.name, "x": r.x, "y": r.y, "w": r.w, "h": r.h} for r in ev.rois],
        "metadata": dict(sorted(ev.metadata.items())),
    }


def _event_from_dict(d: dict) -> StimulusEvent:
    return StimulusEvent(
        event_id=str(d["event_id"]),
        timestamp_us=int(d["timestamp_us"]),
        category=Category(d["category"]),
        rating=None if d.get("rating") is None else int(d["rating"]),
        binary_label=None if d.get("binary_label") is None else BinaryLabel(d["binary_label"]),
        luminance=None if d.get("luminance") is None else float(d["luminance"]),
        rois=tuple(
            Roi(str(r["name"]), float(r["x"]), float(r["y"]), float(r["w"]), float(r["h"]))
            for r in d.get("rois", [])
        ),
        metadata={str(k): str(v) for k, v in d.get("metadata", {}).items()},
    )


def save_session(session: Session, directory: str | Path) -> Path:
    """Write a session to ``directory`` in the canonical layout."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    for stream, fname in (
        (session.stream_of(StreamKind.EEG), EEG_FILE),
        (session.stream_of(StreamKind.EYE), EYE_FILE),
    ):
        df = pd.DataFrame(stream.samples, columns=list(stream.channel_names))
        df.insert(0, "timestamp_us", _timestamp_column(stream))
        df.to_csv(directory / fname, index=False)

    with open(directory / EVENTS_FILE, "w") as fh:
        for ev in session.events:
            fh.write(json.dumps(_event_to_dict(ev), sort_keys=True) + "\n")

    meta = {
        "session_id": session.session_id,
        "subject_id": session.subject_id,
        "epoch_length_s": session.epoch_length_s,
        "streams": [
            {
                "stream_id": s.stream_id,
                "kind": s.kind.value,
                "file": EEG_FILE if s.kind == StreamKind.EEG else EYE_FILE,
                "sample_rate_hz": s.sample_rate_hz,
                "start_timestamp_us": s.start_timestamp_us,
                "channel_names": list(s.channel_names),
            }
            for s in session.streams
        ],
    }
    with open(directory / META_FILE, "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return directory


def _repair_nan_runs(values: np.ndarray, location: str) -> np.ndarray:
    """Linearly interpolate NaN runs of length <= MAX_INTERPOLATED_GAP.

    Longer runs (and NaN runs touching either end) are an ingest error:
    there is nothing to interpolate from.
    """
    out = values.copy()
    for col in range(out.shape[1]):
        x = out[:, col]
        isnan = np.isnan(x)
        if not isnan.any():
            continue
        # locate runs
        idx = np.flatnonzero(isnan)
        run_start = idx[np.r_[True, np.diff(idx) > 1]]
        run_end = idx[np.r_[np.diff(idx) > 1, True]]
        for a, b in zip(run_start, run_end):
            run_len = b - a + 1
            if run_len > MAX_INTERPOLATED_GAP:
                raise IngestError(
                    f"{location}: NaN run of {run_len} samples at row {a} "
                    f"(max interpolatable is {MAX_INTERPOLATED_GAP})"
                )
            if a == 0 or b == len(x) - 1:
                raise IngestError(f"{location}: NaN run touches stream edge at row {a}")
            x[a : b + 1] = np.interp(
                np.arange(a, b + 1), [a - 1, b + 1], [x[a - 1], x[b + 1]]
            )
    return out


def _load_stream(
    directory: Path, meta: dict, allow_any_rate: bool
) -> SampleStream:
    kind = StreamKind(meta["kind"])
    rate = float(meta["sample_rate_hz"])
    if not allow_any_rate:
        if kind == StreamKind.EEG and rate not in EEG_RATES_HZ:
            raise IngestError(
                f"EEG rate {rate} Hz not in {EEG_RATES_HZ}; pass allow_any_rate to override"
            )
        if kind == StreamKind.EYE and rate != EYE_RATE_HZ:
            raise IngestError(
                f"eye rate {rate} Hz != {EYE_RATE_HZ}; pass allow_any_rate to override"
            )

    path = directory / meta["file"]
    df = pd.read_csv(path, float_precision="round_trip")
    expected_cols = ["timestamp_us"] + list(meta["channel_names"])
    if list(df.columns) != expected_cols:
        raise IngestError(f"{path.name}: header {list(df.columns)} != {expected_cols}")

    channels = tuple(meta["channel_names"])
    if kind == StreamKind.EEG and channels != EEG_CHANNELS:
        raise IngestError(f"{path.name}: EEG channels {channels} != {EEG_CHANNELS}")
    if kind == StreamKind.EYE and channels != EYE_CHANNELS:
        raise IngestError(f"{path.name}: eye channels {channels} != {EYE_CHANNELS}")

    ts = df["timestamp_us"].to_numpy(dtype=np.int64)
    start = int(meta["start_timestamp_us"])
    if len(ts):
        expected_ts = start + np.round(
            np.arange(len(ts), dtype=np.float64) * 1_000_000.0 / rate
        ).astype(np.int64)
        if ts[0] != start or not np.array_equal(ts, expected_ts):
            raise IngestError(f"{path.name}: timestamps deviate from the uniform {rate} Hz grid")

    samples = df[list(channels)].to_numpy(dtype=np.float64)
    samples = _repair_nan_runs(samples, path.name)
    return SampleStream(
        stream_id=str(meta["stream_id"]),
        kind=kind,
        channel_names=channels,
        sample_rate_hz=rate,
        start_timestamp_us=start,
        samples=samples,
    )


def load_session(directory: str | Path, allow_any_rate: bool = False) -> Session:
    """Load a session directory; applies the NaN repair policy at ingest."""
    directory = Path(directory)
    meta_path = directory / META_FILE
    if not meta_path.exists():
        raise IngestError(f"{directory} is not a session directory (no {META_FILE})")
    with open(meta_path) as fh:
        meta = json.load(fh)

    streams = tuple(
        _load_stream(directory, sm, allow_any_rate) for sm in meta["streams"]
    )

    events: list[StimulusEvent] = []
    events_path = directory / EVENTS_FILE
    if events_path.exists():
        with open(events_path) as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(_event_from_dict(json.loads(line)))
                except (KeyError, ValueError) as exc:
                    raise IngestError(f"{EVENTS_FILE}:{line_no}: {exc}") from exc

    return Session(
        session_id=str(meta["session_id"]),
        subject_id=str(meta["subject_id"]),
        streams=streams,
        events=tuple(events),
        epoch_length_s=float(meta["epoch_length_s"]),
    )
