"""Per-trial feature extraction: EEG and eye feature vectors.

Each EEG channel contributes 40 dimensions (5 absolute + 5 relative band
powers, non-stationarity index, Higuchi fractal dimension, 10
higher-order crossing counts, 18 wavelet sub-band statistics), giving
240 EEG columns for the six-channel montage, plus 12 eye columns = 252
total. Column names and order are fixed and platform-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import signal as sig

from .core import EEG_CHANNELS, BinaryLabel, Category, QualityFlag, Trial
from .errors import (
    FeatureExtractionError,
    NoValidPupilError,
    TooShortError,
)
from .preprocess import combined_pupil
from .wavelet import subband_coeffs, subband_names

EEG_BANDS: tuple[tuple[str, float, float], ...] = (
    ("delta", 1.0, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 14.0),
    ("beta", 14.0, 31.0),
    ("gamma", 31.0, 50.0),
)
TOTAL_BAND = (1.0, 50.0)

PUPIL_PSD_BANDS: tuple[tuple[float, float], ...] = (
    (0.0, 0.2),
    (0.2, 0.4),
    (0.4, 0.6),
    (0.6, 1.0),
)

DWT_LEVELS = 5
DWT_STATS = ("log_energy", "mean_abs", "std")
LOG_ENERGY_FLOOR = 1e-12

EYE_FEATURE_NAMES: tuple[str, ...] = (
    "eye.pupil_mean",
    "eye.pupil_std",
    "eye.pupil_psd_b1",
    "eye.pupil_psd_b2",
    "eye.pupil_psd_b3",
    "eye.pupil_psd_b4",
    "eye.fixation_freq",
    "eye.fixation_dur_mean",
    "eye.fixation_dur_total",
    "eye.gaze_velocity_mean",
    "eye.gaze_dispersion",
    "eye.saccade_count",
)


@dataclass(frozen=True)
class FeatureParams:
    fd_k_max: int = 8
    hoc_max_order: int = 10
    dwt_levels: int = DWT_LEVELS
    idt_max_dispersion: float = 0.04
    idt_min_duration_s: float = 0.1
    pupil_psd_nfft: int = 4096


def eeg_channel_feature_names(channel: str, params: FeatureParams = FeatureParams()) -> list[str]:
    names = [f"eeg.{channel}.{band}_power" for band, _, _ in EEG_BANDS]
    names += [f"eeg.{channel}.{band}_rel" for band, _, _ in EEG_BANDS]
    names += [f"eeg.{channel}.nsi", f"eeg.{channel}.fd"]
    names += [f"eeg.{channel}.hoc{k}" for k in range(1, params.hoc_max_order + 1)]
    for sub in subband_names(params.dwt_levels):
        names += [f"eeg.{channel}.dwt_{sub}_{stat}" for stat in DWT_STATS]
    return names


def canonical_feature_names(
    params: FeatureParams = FeatureParams(),
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """(names, modalities) for the full fixed layout."""
    names: list[str] = []
    modalities: list[str] = []
    for ch in EEG_CHANNELS:
        ch_names = eeg_channel_feature_names(ch, params)
        names += ch_names
        modalities += ["eeg"] * len(ch_names)
    names += list(EYE_FEATURE_NAMES)
    modalities += ["eye"] * len(EYE_FEATURE_NAMES)
    return tuple(names), tuple(modalities)


def eeg_band_powers(x: np.ndarray, rate_hz: float) -> tuple[np.ndarray, np.ndarray]:
    """Absolute and relative power in the five canonical bands.

    Welch PSD with 1 s Hann segments at 50% overlap; band power is the
    PSD integral over the band, relative power divides by the 1-50 Hz
    total.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < rate_hz:
        raise TooShortError(f"band powers need >= 1 s of samples, got {len(x)}")
    nperseg = int(rate_hz)
    freqs, psd = sig.welch(
        x, fs=rate_hz, window="hann", nperseg=nperseg, noverlap=nperseg // 2
    )
    powers = np.empty(len(EEG_BANDS))
    for i, (_, lo, hi) in enumerate(EEG_BANDS):
        m = (freqs >= lo) & (freqs <= hi)
        powers[i] = float(np.trapezoid(psd[m], freqs[m]))
    m_tot = (freqs >= TOTAL_BAND[0]) & (freqs <= TOTAL_BAND[1])
    total = float(np.trapezoid(psd[m_tot], freqs[m_tot]))
    relative = powers / total if total > 0 else np.zeros_like(powers)
    return powers, relative


def eeg_nsi(x: np.ndarray, n_segments: int = 10) -> float:
    """Non-stationarity index: dispersion of local segment means.

    The signal is z-normalized, cut into ``n_segments`` equal pieces
    (trailing remainder dropped), and the population standard deviation
    of the segment means is returned. Zero-variance input maps to 0.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < n_segments:
        raise TooShortError(f"NSI needs >= {n_segments} samples, got {len(x)}")
    std = x.std()
    if std == 0.0:
        return 0.0
    z = (x - x.mean()) / std
    seg_len = len(z) // n_segments
    segments = z[: seg_len * n_segments].reshape(n_segments, seg_len)
    return float(segments.mean(axis=1).std())


def eeg_fractal_dimension(x: np.ndarray, k_max: int = 8) -> float:
    """Higuchi fractal dimension, clamped to [1, 2].

    Curve lengths L(k) are averaged over the k interleaved subsequences
    and regressed on log k; the estimate is the negated slope.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n < 2 * k_max:
        raise TooShortError(f"Higuchi FD needs >= {2 * k_max} samples, got {n}")
    lengths = np.empty(k_max)
    for k in range(1, k_max + 1):
        total, count = 0.0, 0
        for m in range(k):
            sub = x[m::k]
            n_diff = len(sub) - 1
            if n_diff < 1:
                continue
            total += np.abs(np.diff(sub)).sum() * (n - 1) / (n_diff * k) / k
            count += 1
        lengths[k - 1] = total / count
    log_k = np.log(np.arange(1, k_max + 1, dtype=np.float64))
    log_l = np.log(np.maximum(lengths, 1e-300))
    slope = np.polyfit(log_k, log_l, 1)[0]
    return float(np.clip(-slope, 1.0, 2.0))


def eeg_hoc(x: np.ndarray, max_order: int = 10) -> np.ndarray:
    """Higher-order crossings: sign-change counts of iterated differences.

    Order k counts the sign changes of the (k-1)-times differenced,
    mean-removed signal; zeros are grouped with the positive half-line.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < max_order + 2:
        raise TooShortError(f"HOC needs >= {max_order + 2} samples, got {len(x)}")
    y = x - x.mean()
    counts = np.empty(max_order)
    for k in range(max_order):
        s = y >= 0
        counts[k] = int(np.count_nonzero(s[1:] != s[:-1]))
        y = np.diff(y)
    return counts


def eeg_dwt_features(x: np.ndarray, levels: int = DWT_LEVELS) -> np.ndarray:
    """Per sub-band (A5, D5..D1): log energy, mean |coef|, coef std."""
    bands = subband_coeffs(x, levels)
    out = []
    for name in subband_names(levels):
        c = bands[name]
        energy = float(c @ c)
        out += [
            math.log(energy + LOG_ENERGY_FLOOR),
            float(np.abs(c).mean()),
            float(c.std()),
        ]
    return np.array(out)


@dataclass(frozen=True)
class Fixation:
    start: int  # sample index, inclusive
    stop: int  # sample index, exclusive
    cx: float
    cy: float

    def duration_s(self, rate_hz: float) -> float:
        return (self.stop - self.start) / rate_hz


def detect_fixations(
    gx: np.ndarray,
    gy: np.ndarray,
    valid: np.ndarray,
    rate_hz: float,
    max_dispersion: float = 0.04,
    min_duration_s: float = 0.1,
) -> list[Fixation]:
    """Dispersion-threshold (I-DT) fixation detection.

    A window whose dispersion (x range + y range) stays within
    ``max_dispersion`` for at least ``min_duration_s`` is one fixation;
    the window grows greedily until dispersion is exceeded. Invalid
    samples break windows.
    """
    n = len(gx)
    w_min = max(int(round(min_duration_s * rate_hz)), 2)
    fixations: list[Fixation] = []
    i = 0
    while i + w_min <= n:
        if not valid[i : i + w_min].all():
            i += 1
            continue
        window_x = gx[i : i + w_min]
        window_y = gy[i : i + w_min]
        x_lo, x_hi = float(window_x.min()), float(window_x.max())
        y_lo, y_hi = float(window_y.min()), float(window_y.max())
        if (x_hi - x_lo) + (y_hi - y_lo) > max_dispersion:
            i += 1
            continue
        j = i + w_min
        while j < n and valid[j]:
            nx_lo, nx_hi = min(x_lo, gx[j]), max(x_hi, gx[j])
            ny_lo, ny_hi = min(y_lo, gy[j]), max(y_hi, gy[j])
            if (nx_hi - nx_lo) + (ny_hi - ny_lo) > max_dispersion:
                break
            x_lo, x_hi, y_lo, y_hi = nx_lo, nx_hi, ny_lo, ny_hi
            j += 1
        fixations.append(
            Fixation(i, j, float(gx[i:j].mean()), float(gy[i:j].mean()))
        )
        i = j
    return fixations


def _pupil_band_psd(series: np.ndarray, rate_hz: float, nfft: int) -> np.ndarray:
    """Power in the four slow pupil bands from a zero-padded periodogram.

    The mean is removed first so the 0-0.2 Hz band measures slow
    oscillation, not DC offset. A fine zero-padded grid keeps the
    trapezoid integrals well-defined for short epochs, though bands this
    narrow only truly resolve on epochs of 10 s or more.
    """
    x = series - series.mean()
    freqs, psd = sig.periodogram(
        x, fs=rate_hz, window="hann", nfft=max(nfft, len(x)), detrend=False
    )
    out = np.empty(len(PUPIL_PSD_BANDS))
    for i, (lo, hi) in enumerate(PUPIL_PSD_BANDS):
        m = (freqs >= lo) & (freqs <= hi)
        out[i] = float(np.trapezoid(psd[m], freqs[m]))
    return out


def eye_features(trial: Trial, params: FeatureParams = FeatureParams()) -> np.ndarray:
    """The 12-dimensional eye feature vector, in the canonical order.

    Pupil statistics use the mean of the valid eyes; fixation metrics
    come from I-DT on the normalized gaze trace. ``fixation_freq`` is
    fixations per second of epoch.
    """
    rate = trial.eye_rate_hz
    eye = trial.eye_epoch
    if eye.shape[0] < rate:
        raise TooShortError(f"eye features need >= 1 s of samples, got {eye.shape[0]}")
    names = trial.eye_channel_names
    gx = eye[:, names.index("gaze_x")]
    gy = eye[:, names.index("gaze_y")]

    pupil, pupil_valid = combined_pupil(trial)
    n = len(pupil)
    if np.count_nonzero(~pupil_valid) > 0.5 * n:
        raise NoValidPupilError(
            f"both eyes invalid for {np.count_nonzero(~pupil_valid)}/{n} samples"
        )
    pupil_mean = float(pupil[pupil_valid].mean())
    pupil_std = float(pupil[pupil_valid].std())
    if pupil_valid.all():
        pupil_full = pupil
    else:  # fill gaps so the spectral estimate sees a uniform series
        idx = np.arange(n)
        pupil_full = np.interp(idx, idx[pupil_valid], pupil[pupil_valid])
    psd_bands = _pupil_band_psd(pupil_full, rate, params.pupil_psd_nfft)

    epoch_s = n / rate
    fixations = detect_fixations(
        gx, gy, pupil_valid, rate, params.idt_max_dispersion, params.idt_min_duration_s
    )
    durations = [f.duration_s(rate) for f in fixations]
    fixation_freq = len(fixations) / epoch_s
    fix_dur_mean = float(np.mean(durations)) if durations else 0.0
    fix_dur_total = float(np.sum(durations)) if durations else 0.0

    saccades = 0
    for a, b in zip(fixations, fixations[1:]):
        if math.hypot(b.cx - a.cx, b.cy - a.cy) > params.idt_max_dispersion:
            saccades += 1

    both = pupil_valid
    pair = both[1:] & both[:-1]
    if pair.any():
        step = np.hypot(np.diff(gx), np.diff(gy))[pair]
        velocity = float(step.mean() * rate)
    else:
        velocity = 0.0
    if both.any():
        cx, cy = gx[both].mean(), gy[both].mean()
        dispersion = float(np.sqrt(np.mean((gx[both] - cx) ** 2 + (gy[both] - cy) ** 2)))
    else:
        dispersion = 0.0

    return np.array(
        [
            pupil_mean,
            pupil_std,
            *psd_bands,
            fixation_freq,
            fix_dur_mean,
            fix_dur_total,
            velocity,
            dispersion,
            float(saccades),
        ]
    )


#: Flags that forbid feature extraction; CLIPPED alone is tolerated.
BLOCKING_FLAGS = frozenset(
    {QualityFlag.EEG_GAP, QualityFlag.EYE_GAP, QualityFlag.OUT_OF_SPAN}
)


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    names: tuple[str, ...]
    modalities: tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.names) or len(self.names) != len(self.modalities):
            raise ValueError("values, names, modalities must have equal length")
        if len(set(self.names)) != len(self.names):
            raise ValueError("feature names must be unique")
        if not np.all(np.isfinite(self.values)):
            bad = [self.names[i] for i in np.flatnonzero(~np.isfinite(self.values))]
            raise ValueError(f"non-finite feature values: {bad[:5]}")


def extract_all(trial: Trial, params: FeatureParams = FeatureParams()) -> FeatureVector:
    """Assemble the full per-trial feature vector (240 EEG + 12 eye)."""
    blocked = trial.quality_flags & BLOCKING_FLAGS
    if blocked:
        raise FeatureExtractionError(
            f"trial {trial.event_id!r} has blocking flags: "
            f"{sorted(f.value for f in blocked)}"
        )
    values: list[float] = []
    for c, _ in enumerate(EEG_CHANNELS):
        x = trial.eeg_epoch[:, c]
        powers, rel = eeg_band_powers(x, trial.eeg_rate_hz)
        values += list(powers) + list(rel)
        values.append(eeg_nsi(x))
        values.append(eeg_fractal_dimension(x, params.fd_k_max))
        values += list(eeg_hoc(x, params.hoc_max_order))
        values += list(eeg_dwt_features(x, params.dwt_levels))
    values += list(eye_features(trial, params))
    names, modalities = canonical_feature_names(params)
    return FeatureVector(np.array(values), names, modalities)


@dataclass
class FeatureMatrix:
    """Per-trial feature rows with labels and shared column metadata.

    Labels are +1 (like) / -1 (dislike).
    """

    x: np.ndarray  # [n_trials, n_features]
    names: tuple[str, ...]
    modalities: tuple[str, ...]
    labels: np.ndarray  # [n_trials] int, +1 / -1
    event_ids: tuple[str, ...] = ()
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[1] != len(self.names):
            raise ValueError(f"matrix shape {self.x.shape} vs {len(self.names)} names")
        if len(self.labels) != self.x.shape[0]:
            raise ValueError("labels length != number of rows")

    @property
    def n_trials(self) -> int:
        return int(self.x.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.x.shape[1])

    def row(self, i: int) -> FeatureVector:
        return FeatureVector(self.x[i].copy(), self.names, self.modalities)

    def subset_rows(self, idx: np.ndarray) -> "FeatureMatrix":
        idx = np.asarray(idx)
        return FeatureMatrix(
            self.x[idx].copy(),
            self.names,
            self.modalities,
            self.labels[idx].copy(),
            tuple(self.event_ids[i] for i in idx) if self.event_ids else (),
            tuple(self.categories[i] for i in idx) if self.categories else (),
        )

    def subset_modality(self, modality: str) -> "FeatureMatrix":
        keep = [i for i, m in enumerate(self.modalities) if m == modality]
        return FeatureMatrix(
            self.x[:, keep].copy(),
            tuple(self.names[i] for i in keep),
            tuple(self.modalities[i] for i in keep),
            self.labels.copy(),
            self.event_ids,
            self.categories,
        )

    def to_csv(self, path) -> None:
        """Persist as CSV: feature columns plus a trailing label column."""
        df = pd.DataFrame(self.x, columns=list(self.names))
        df["label"] = self.labels
        df.to_csv(path, index=False)

    @classmethod
    def from_csv(cls, path, modalities: tuple[str, ...] | None = None) -> "FeatureMatrix":
        df = pd.read_csv(path, float_precision="round_trip")
        if "label" not in df.columns:
            raise ValueError(f"{path}: no label column")
        names = tuple(c for c in df.columns if c != "label")
        if modalities is None:
            modalities = tuple("eye" if n.startswith("eye.") else "eeg" for n in names)
        return cls(
            df[list(names)].to_numpy(dtype=np.float64),
            names,
            modalities,
            df["label"].to_numpy(dtype=np.int64),
        )


def build_feature_matrix(
    trials: list[Trial], params: FeatureParams = FeatureParams()
) -> FeatureMatrix:
    """Extract features for every labeled, unblocked trial."""
    rows, labels, ids, cats = [], [], [], []
    for t in trials:
        if t.label is None:
            continue
        fv = extract_all(t, params)
        rows.append(fv.values)
        labels.append(1 if t.label == BinaryLabel.LIKE else -1)
        ids.append(t.event_id)
        cats.append(t.category.value if isinstance(t.category, Category) else str(t.category))
    if not rows:
        raise FeatureExtractionError("no labeled, extractable trials")
    names, modalities = canonical_feature_names(params)
    return FeatureMatrix(
        np.vstack(rows), names, modalities, np.array(labels, dtype=np.int64),
        tuple(ids), tuple(cats),
    )
