"""Seeded synthetic-session generator with planted affect signatures.

Sessions mimic the sensor contracts (six frontal EEG channels of 1/f
noise with power-line and blink artifacts; a 60 Hz eye stream with
pupil, gaze, and validity) and plant a configurable attraction
signature: extra alpha-band power on AF3/AF4 and pupil dilation during
'like' epochs. With effect_size 0 the label is independent of every
signal by construction, which makes the generator a null oracle; with
effect_size 1 the planted signal should be comfortably recoverable.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import signal as sig

from .core import (
    EEG_CHANNELS,
    EYE_CHANNELS,
    BinaryLabel,
    Category,
    Roi,
    SampleStream,
    Session,
    StimulusEvent,
    StreamKind,
    binarize_label,
)
from .errors import InvalidConfigError
from .session_io import save_session

#: Relative blink amplitude per channel (Fp1, Fp2, AF3, AF4, AF7, AF8).
BLINK_TOPOGRAPHY = np.array([1.0, 1.0, 0.45, 0.45, 0.3, 0.3])

COMPOSITE_ROIS = (
    Roi("face", 0.30, 0.05, 0.40, 0.35),
    Roi("cloth", 0.30, 0.45, 0.40, 0.45),
    Roi("color", 0.00, 0.00, 0.25, 1.00),
)
SINGLE_ROI = Roi("image", 0.25, 0.25, 0.50, 0.50)


@dataclass(frozen=True)
class GeneratorConfig:
    n_face: int = 30
    n_cloth: int = 30
    n_color: int = 30
    n_composite: int = 54
    effect_size: float = 1.0
    eeg_rate_hz: float = 250.0
    eeg_base_amp_uv: float = 20.0
    line_noise_amp_uv: float = 5.0
    blink_rate_hz: float = 0.2
    blink_amp_uv: float = 80.0
    pupil_base_mm: float = 3.0
    pupil_reflex_gain_mm: float = -0.8  # mm per luminance unit
    pupil_slow_amp_mm: float = 0.05
    pupil_fast_noise_mm: float = 0.015
    alpha_power_boost: float = 0.4  # fractional alpha increase at effect 1
    pupil_dilation_mm: float = 0.4  # added diameter at effect 1
    epoch_s: float = 2.0
    gap_s: float = 1.0
    lead_in_s: float = 2.0
    like_probability: float = 0.5
    attention_weights: tuple[float, float, float] = (0.5, 0.3, 0.2)  # face, cloth, color
    seed: int = 0

    @property
    def n_events(self) -> int:
        return self.n_face + self.n_cloth + self.n_color + self.n_composite

    def check(self) -> None:
        non_negative = {
            "eeg_base_amp_uv": self.eeg_base_amp_uv,
            "line_noise_amp_uv": self.line_noise_amp_uv,
            "blink_rate_hz": self.blink_rate_hz,
            "blink_amp_uv": self.blink_amp_uv,
            "pupil_base_mm": self.pupil_base_mm,
            "pupil_slow_amp_mm": self.pupil_slow_amp_mm,
            "pupil_fast_noise_mm": self.pupil_fast_noise_mm,
            "alpha_power_boost": self.alpha_power_boost,
            "pupil_dilation_mm": self.pupil_dilation_mm,
            "n_face": self.n_face,
            "n_cloth": self.n_cloth,
            "n_color": self.n_color,
            "n_composite": self.n_composite,
        }
        for name, value in non_negative.items():
            if value < 0:
                raise InvalidConfigError(f"{name} must be >= 0, got {value}")
        if not (0.0 <= self.effect_size <= 1.0):
            raise InvalidConfigError(f"effect_size {self.effect_size} outside [0, 1]")
        if not (0.0 < self.like_probability < 1.0):
            raise InvalidConfigError("like_probability must be in (0, 1)")
        if self.epoch_s <= 0 or self.gap_s < 0 or self.lead_in_s < self.epoch_s / 2:
            raise InvalidConfigError("invalid timeline (epoch_s, gap_s, lead_in_s)")
        if self.n_events == 0:
            raise InvalidConfigError("no events configured")


def pink_noise(rng: np.random.Generator, n: int, rms: float) -> np.ndarray:
    """1/f-amplitude noise with the requested RMS."""
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    x = np.fft.irfft(spectrum * scale, n)
    std = x.std()
    return x * (rms / std) if std > 0 else x


def _blink_bump(n: int) -> np.ndarray:
    return np.hanning(n)


def _first_sample_at_or_after(t_us: int, rate_hz: float) -> int:
    """Smallest index whose rounded-microsecond timestamp is >= t_us.

    Matches the epoching alignment rule so planted windows and
    extracted windows cover the same samples.
    """
    i = int(np.floor(t_us * rate_hz / 1_000_000))
    while i > 0 and round((i - 1) * 1_000_000 / rate_hz) >= t_us:
        i -= 1
    while round(i * 1_000_000 / rate_hz) < t_us:
        i += 1
    return i


def _alpha_band_power(x: np.ndarray, rate_hz: float) -> float:
    nper = min(len(x), int(4 * rate_hz))
    freqs, psd = sig.welch(x, fs=rate_hz, nperseg=nper, noverlap=nper // 2, window="hann")
    m = (freqs >= 8.0) & (freqs <= 14.0)
    return float(np.trapezoid(psd[m], freqs[m]))


@dataclass
class _EventPlan:
    event_id: str
    category: Category
    timestamp_us: int
    rating: int
    label: BinaryLabel
    luminance: float
    rois: tuple[Roi, ...]
    metadata: dict[str, str]


def _plan_events(config: GeneratorConfig, rng: np.random.Generator,
                 viewer_sex: str) -> tuple[list[_EventPlan], dict[str, dict[str, str]]]:
    singles: dict[str, list[tuple[str, str]]] = {"face": [], "cloth": [], "color": []}
    specs = [
        (Category.FACE, config.n_face, "face"),
        (Category.CLOTH, config.n_cloth, "cloth"),
        (Category.COLOR, config.n_color, "color"),
    ]
    entries: list[tuple[Category, str, dict[str, str]]] = []
    for category, count, stem in specs:
        for i in range(count):
            image_sex = "male" if i < count // 2 else "female"
            event_id = f"{stem}{i + 1:03d}"
            singles[stem].append((event_id, image_sex))
            entries.append(
                (category, event_id, {"image_sex": image_sex, "viewer_sex": viewer_sex})
            )

    composition: dict[str, dict[str, str]] = {}
    if config.n_composite:
        combos: list[tuple[str, dict[str, str]]] = []
        for sex in ("male", "female"):
            pools = {}
            for stem in ("face", "cloth", "color"):
                of_sex = [eid for eid, s in singles[stem] if s == sex]
                pools[stem] = of_sex[:3] if of_sex else [eid for eid, _ in singles[stem]][:3]
            if not all(pools.values()):
                continue
            for f_id, cl_id, co_id in itertools.product(
                pools["face"], pools["cloth"], pools["color"]
            ):
                combos.append((sex, {"face": f_id, "cloth": cl_id, "color": co_id}))
        if not combos:
            raise InvalidConfigError("composites need at least one single-category image")
        for i in range(config.n_composite):
            sex, parts = combos[i % len(combos)]
            event_id = f"comp{i + 1:03d}"
            composition[event_id] = dict(parts)
            meta = {"image_sex": sex, "viewer_sex": viewer_sex}
            meta.update({f"{k}_id": v for k, v in parts.items()})
            entries.append((Category.COMPOSITE, event_id, meta))

    order = rng.permutation(len(entries))
    trial_period_us = round((config.epoch_s + config.gap_s) * 1_000_000)
    lead_us = round(config.lead_in_s * 1_000_000)
    plans: list[_EventPlan] = []
    for pos, j in enumerate(order):
        category, event_id, meta = entries[j]
        like = rng.random() < config.like_probability
        rating = int(rng.integers(5, 8)) if like else int(rng.integers(1, 5))
        plans.append(
            _EventPlan(
                event_id=event_id,
                category=category,
                timestamp_us=lead_us + pos * trial_period_us,
                rating=rating,
                label=binarize_label(rating),
                luminance=float(rng.uniform(0.2, 0.9)),
                rois=COMPOSITE_ROIS if category == Category.COMPOSITE else (SINGLE_ROI,),
                metadata=meta,
            )
        )
    return plans, composition


def _synth_eeg(
    config: GeneratorConfig,
    rng: np.random.Generator,
    n: int,
    plans: list[_EventPlan],
) -> np.ndarray:
    fs = config.eeg_rate_hz
    t = np.arange(n) / fs
    data = np.column_stack(
        [pink_noise(rng, n, config.eeg_base_amp_uv) for _ in EEG_CHANNELS]
    )
    if config.line_noise_amp_uv > 0:
        phase = rng.uniform(0, 2 * np.pi)
        data += config.line_noise_amp_uv * np.sin(2 * np.pi * 60.0 * t + phase)[:, None]

    if config.blink_rate_hz > 0 and config.blink_amp_uv > 0:
        blink_len = int(round(0.3 * fs))
        bump = _blink_bump(blink_len)
        n_blinks = rng.poisson(config.blink_rate_hz * n / fs)
        starts = np.sort(rng.integers(0, max(n - blink_len, 1), size=n_blinks))
        for s in starts:
            amp = config.blink_amp_uv * rng.uniform(0.7, 1.3)
            data[s : s + blink_len] += amp * bump[:, None] * BLINK_TOPOGRAPHY[None, :]

    if config.effect_size > 0 and config.alpha_power_boost > 0:
        epoch_n = round(config.epoch_s * fs)
        af3, af4 = EEG_CHANNELS.index("AF3"), EEG_CHANNELS.index("AF4")
        base_alpha = 0.5 * (
            _alpha_band_power(data[:, af3], fs) + _alpha_band_power(data[:, af4], fs)
        )
        delta_p = config.effect_size * config.alpha_power_boost * base_alpha
        amp = np.sqrt(2.0 * delta_p)
        for plan in plans:
            if plan.label != BinaryLabel.LIKE:
                continue
            i0 = _first_sample_at_or_after(plan.timestamp_us, fs)
            idx = slice(i0, min(i0 + epoch_n, n))
            tt = t[idx]
            for ch in (af3, af4):
                data[:, ch][idx] += amp * np.sin(
                    2 * np.pi * 10.0 * tt + rng.uniform(0, 2 * np.pi)
                )
    return data


def _gaze_plan(
    config: GeneratorConfig,
    rng: np.random.Generator,
    n: int,
    plans: list[_EventPlan],
) -> tuple[np.ndarray, np.ndarray]:
    fs = 60.0
    gx = 0.5 + rng.normal(0, 0.004, size=n)
    gy = 0.5 + rng.normal(0, 0.004, size=n)
    epoch_n = round(config.epoch_s * fs)
    weights = np.array(config.attention_weights)
    weights = weights / weights.sum()
    for plan in plans:
        i0 = _first_sample_at_or_after(plan.timestamp_us, fs)
        stop = min(i0 + epoch_n, n)
        pos = i0
        while pos < stop:
            if plan.category == Category.COMPOSITE:
                roi = COMPOSITE_ROIS[int(rng.choice(3, p=weights))]
            else:
                roi = plan.rois[0]
            cx = roi.x + roi.w * rng.uniform(0.2, 0.8)
            cy = roi.y + roi.h * rng.uniform(0.2, 0.8)
            dwell = int(round(rng.uniform(0.25, 0.45) * fs))
            span = slice(pos, min(pos + dwell, stop))
            count = span.stop - span.start
            gx[span] = cx + rng.normal(0, 0.003, size=count)
            gy[span] = cy + rng.normal(0, 0.003, size=count)
            pos += dwell
    return np.clip(gx, 0.0, 1.0), np.clip(gy, 0.0, 1.0)


def _synth_eye(
    config: GeneratorConfig,
    rng: np.random.Generator,
    n: int,
    plans: list[_EventPlan],
) -> np.ndarray:
    fs = 60.0
    t = np.arange(n) / fs
    luminance = np.full(n, 0.5)
    dilation = np.zeros(n)
    epoch_n = round(config.epoch_s * fs)
    for plan in plans:
        i0 = _first_sample_at_or_after(plan.timestamp_us, fs)
        idx = slice(i0, min(i0 + epoch_n, n))
        luminance[idx] = plan.luminance
        if plan.label == BinaryLabel.LIKE:
            dilation[idx] = config.effect_size * config.pupil_dilation_mm

    pupil = (
        config.pupil_base_mm
        + config.pupil_reflex_gain_mm * (luminance - 0.5)
        + dilation
        + config.pupil_slow_amp_mm * np.sin(2 * np.pi * 0.13 * t + rng.uniform(0, 2 * np.pi))
        + config.pupil_fast_noise_mm * rng.standard_normal(n)
    )
    left = pupil + 0.005 * rng.standard_normal(n)
    right = pupil + 0.005 * rng.standard_normal(n)
    gx, gy = _gaze_plan(config, rng, n, plans)
    valid = np.ones(n)
    return np.column_stack([left, right, gx, gy, valid, valid])


def generate_session(
    config: GeneratorConfig,
    session_id: str = "synthetic",
    subject_id: str = "s01",
    viewer_sex: str = "male",
    rng: np.random.Generator | None = None,
) -> tuple[Session, dict]:
    """Generate one session plus its ground-truth record.

    Deterministic for a given config (and seed); the truth dict carries
    the planted labels, the composite composition map, and the planted
    parameters.
    """
    config.check()
    if rng is None:
        rng = np.random.default_rng(config.seed)

    plans, composition = _plan_events(config, rng, viewer_sex)
    total_s = (
        config.lead_in_s
        + config.n_events * (config.epoch_s + config.gap_s)
        + config.epoch_s
    )
    n_eeg = int(round(total_s * config.eeg_rate_hz))
    n_eye = int(round(total_s * 60.0))

    eeg = SampleStream(
        stream_id="eeg0",
        kind=StreamKind.EEG,
        channel_names=EEG_CHANNELS,
        sample_rate_hz=config.eeg_rate_hz,
        start_timestamp_us=0,
        samples=_synth_eeg(config, rng, n_eeg, plans),
    )
    eye = SampleStream(
        stream_id="eye0",
        kind=StreamKind.EYE,
        channel_names=EYE_CHANNELS,
        sample_rate_hz=60.0,
        start_timestamp_us=0,
        samples=_synth_eye(config, rng, n_eye, plans),
    )
    events = tuple(
        StimulusEvent(
            event_id=p.event_id,
            timestamp_us=p.timestamp_us,
            category=p.category,
            rating=p.rating,
            binary_label=p.label,
            luminance=p.luminance,
            rois=p.rois,
            metadata=p.metadata,
        )
        for p in plans
    )
    session = Session(
        session_id=session_id,
        subject_id=subject_id,
        streams=(eeg, eye),
        events=events,
        epoch_length_s=config.epoch_s,
    )
    truth = {
        "session_id": session_id,
        "subject_id": subject_id,
        "viewer_sex": viewer_sex,
        "seed": config.seed,
        "effect_size": config.effect_size,
        "labels": {p.event_id: p.label.value for p in plans},
        "composition": composition,
        "planted": {
            "alpha_power_boost": config.alpha_power_boost,
            "pupil_dilation_mm": config.pupil_dilation_mm,
            "pupil_reflex_gain_mm": config.pupil_reflex_gain_mm,
            "line_noise_amp_uv": config.line_noise_amp_uv,
            "blink_amp_uv": config.blink_amp_uv,
        },
    }
    return session, truth


def generate_corpus(
    config: GeneratorConfig,
    out_dir: str | Path,
    n_subjects: int = 13,
) -> list[Path]:
    """Write ``n_subjects`` session directories plus per-session truth.

    Each subject gets an independent, deterministically derived seed;
    viewer sex alternates male/female across subjects.
    """
    config.check()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    seq = np.random.SeedSequence(config.seed)
    paths: list[Path] = []
    manifest = {"seed": config.seed, "n_subjects": n_subjects, "sessions": []}
    for i, child in enumerate(seq.spawn(n_subjects)):
        subject = f"s{i + 1:02d}"
        viewer_sex = "male" if i % 2 == 0 else "female"
        rng = np.random.default_rng(child)
        session, truth = generate_session(
            config,
            session_id=f"{subject}-session",
            subject_id=subject,
            viewer_sex=viewer_sex,
            rng=rng,
        )
        sdir = out_dir / subject
        save_session(session, sdir)
        with open(sdir / "truth.json", "w") as fh:
            json.dump(truth, fh, indent=2, sort_keys=True)
            fh.write("\n")
        manifest["sessions"].append(subject)
        paths.append(sdir)
    with open(out_dir / "corpus.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return paths


def small_config(**overrides) -> GeneratorConfig:
    """Compact corpus for fast tests: 6/6/6/9 events by default."""
    base = GeneratorConfig(n_face=6, n_cloth=6, n_color=6, n_composite=9)
    return replace(base, **overrides)
