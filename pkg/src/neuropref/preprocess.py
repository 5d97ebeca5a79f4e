"""EEG filtering and artifact removal, and pupil light-reflex removal.

The cleaning chain is: zero-phase band-pass + power-line notch, then
independent-component rejection of ocular/slip artifacts fitted on the
whole recording, then per-channel wavelet despiking. Pupil diameter is
corrected by regressing stimulus luminance out across trials.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import signal, stats

from .core import Trial
from .errors import (
    InsufficientLuminanceError,
    NotConvergedError,
    NyquistViolationError,
    TooShortError,
)
from .wavelet import wavedec, waverec


@dataclass(frozen=True)
class FilterSpec:
    band_low_hz: float = 0.01
    band_high_hz: float = 120.0
    notch_hz: float = 60.0
    notch_q: float = 30.0
    filter_order: int = 4

    def check(self, rate_hz: float) -> None:
        nyquist = rate_hz / 2.0
        if not (0.0 < self.band_low_hz < self.band_high_hz):
            raise NyquistViolationError(
                f"band [{self.band_low_hz}, {self.band_high_hz}] Hz is not a valid band"
            )
        if self.band_high_hz >= nyquist:
            raise NyquistViolationError(
                f"band high cut {self.band_high_hz} Hz >= Nyquist {nyquist} Hz at {rate_hz} Hz"
            )
        if not (self.band_low_hz < self.notch_hz < self.band_high_hz):
            raise NyquistViolationError(
                f"notch {self.notch_hz} Hz outside band "
                f"[{self.band_low_hz}, {self.band_high_hz}] Hz"
            )


def _zero_phase_sos(sos: np.ndarray, x: np.ndarray, irlen: int) -> np.ndarray:
    """Forward-backward filtering, one second-order section at a time.

    Gustafsson initial conditions are essential here: the 0.01 Hz
    high-pass pole pair rings for minutes, so pad-based edge handling
    leaves large transients on any realistic record length.
    """
    y = x
    for row in sos:
        y = signal.filtfilt(row[:3], row[3:], y, method="gust", irlen=irlen)
    return y


def bandpass_notch(
    epoch: np.ndarray, rate_hz: float, spec: FilterSpec = FilterSpec()
) -> np.ndarray:
    """Zero-phase band-pass then notch, applied per channel.

    Accepts a 1-D signal or an [n_samples, n_channels] array; output has
    the same shape and length. Linear and deterministic.
    """
    spec.check(rate_hz)
    x = np.asarray(epoch, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    if x.shape[0] < 16:
        raise TooShortError(f"epoch of {x.shape[0]} samples is too short to filter")

    sos_band = signal.butter(
        spec.filter_order,
        [spec.band_low_hz, spec.band_high_hz],
        btype="bandpass",
        fs=rate_hz,
        output="sos",
    )
    b_notch, a_notch = signal.iirnotch(spec.notch_hz, spec.notch_q, fs=rate_hz)

    n = x.shape[0]
    irlen_band = min(n - 1, int(120.0 * rate_hz))
    irlen_notch = min(n - 1, int(10.0 * rate_hz))
    out = np.empty_like(x)
    for c in range(x.shape[1]):
        y = _zero_phase_sos(sos_band, x[:, c], irlen_band)
        out[:, c] = signal.filtfilt(
            b_notch, a_notch, y, method="gust", irlen=irlen_notch
        )
    return out[:, 0] if squeeze else out


@dataclass
class ArtifactReport:
    """What the artifact stages removed, serialized into the run report."""

    n_components_removed: int = 0
    removed_indices: list[int] = field(default_factory=list)
    ica_converged: bool = True
    ica_enabled: bool = True
    despike_enabled: bool = True
    despiked_coefficients: dict[str, int] = field(default_factory=dict)
    plr_slope: float | None = None
    plr_applied: bool = False

    def to_dict(self) -> dict:
        return {
            "n_components_removed": self.n_components_removed,
            "removed_indices": list(self.removed_indices),
            "ica_converged": self.ica_converged,
            "ica_enabled": self.ica_enabled,
            "despike_enabled": self.despike_enabled,
            "despiked_coefficients": dict(sorted(self.despiked_coefficients.items())),
            "plr_slope": self.plr_slope,
            "plr_applied": self.plr_applied,
        }


def _sym_decorrelate(w: np.ndarray) -> np.ndarray:
    # W <- (W W^T)^(-1/2) W
    s, u = np.linalg.eigh(w @ w.T)
    s = np.maximum(s, 1e-12)
    return (u / np.sqrt(s)) @ u.T @ w


@dataclass
class IcaModel:
    """Fitted fixed-point ICA plus the rejection-aware cleaning map.

    ``sources = unmixing @ (x - mean)`` for column vectors x; cleaning
    zeroes the rejected sources and remixes:
    ``clean(X) = (X - mean) @ T.T + mean`` with
    ``T = mixing[:, keep] @ unmixing[keep, :]``.
    """

    mean: np.ndarray
    unmixing: np.ndarray  # [k, n_channels], includes whitening
    mixing: np.ndarray  # [n_channels, k]
    removed: list[int]
    converged: bool
    n_iter: int
    seed: int

    def sources(self, data: np.ndarray) -> np.ndarray:
        return (data - self.mean) @ self.unmixing.T

    @property
    def cleaning_matrix(self) -> np.ndarray:
        keep = [i for i in range(self.unmixing.shape[0]) if i not in set(self.removed)]
        if not self.converged:
            return np.eye(self.mixing.shape[0])
        return self.mixing[:, keep] @ self.unmixing[keep, :]

    def apply(self, epoch: np.ndarray) -> np.ndarray:
        """Clean one epoch (or any [n, channels] block) with the fitted map."""
        return (epoch - self.mean) @ self.cleaning_matrix.T + self.mean


def fit_ica(
    data: np.ndarray,
    seed: int = 0,
    max_iter: int = 500,
    tol: float = 1e-6,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool, int]:
    """Fixed-point ICA: tanh contrast, symmetric decorrelation, seeded.

    Uses the stabilized variant: when the rotation stagnates (typical
    when several directions are close to Gaussian, as in noise-dominated
    EEG) the update step is progressively damped, which settles the
    indifferent subspace without disturbing converged artifact
    directions. Returns (mean, unmixing, mixing, converged, n_iter);
    the unmixing matrix includes whitening, so
    sources = unmixing @ centered data.
    """
    x = np.asarray(data, dtype=np.float64)
    n_samples, n_ch = x.shape
    mean = x.mean(axis=0)
    xc = (x - mean).T  # [ch, n]

    cov = xc @ xc.T / n_samples
    eigval, eigvec = np.linalg.eigh(cov)
    eigval = np.maximum(eigval, 1e-12 * eigval.max())
    whitening = (eigvec / np.sqrt(eigval)) @ eigvec.T  # symmetric whitening
    z = whitening @ xc

    rng = np.random.default_rng(seed)
    w = _sym_decorrelate(rng.normal(size=(n_ch, n_ch)))

    converged = False
    it = 0
    step = 1.0
    best_delta = np.inf
    stall = 0
    damping_gate = 1e-3  # full steps until real attractors have converged
    for it in range(1, max_iter + 1):
        wz = w @ z
        g = np.tanh(wz)
        g_prime = (1.0 - g**2).mean(axis=1)
        w_fp = (g @ z.T) / n_samples - g_prime[:, None] * w
        if step < 1.0:
            w_new = _sym_decorrelate((1.0 - step) * w + step * w_fp)
        else:
            w_new = _sym_decorrelate(w_fp)
        delta = np.max(np.abs(np.abs(np.einsum("ij,ij->i", w_new, w)) - 1.0))
        w = w_new
        if delta < tol:
            converged = True
            break
        best_delta = min(best_delta, delta)
        if delta < damping_gate:
            stall += 1
        if best_delta < damping_gate and stall >= 15 and step > 1.0 / 64.0:
            step *= 0.5
            stall = 0

    unmixing = w @ whitening
    mixing = np.linalg.pinv(unmixing)
    return mean, unmixing, mixing, converged, it


def _eog_proxy(data: np.ndarray, rate_hz: float, lowpass_hz: float = 4.0) -> np.ndarray:
    """Ocular reference: mean of Fp1/Fp2 (columns 0, 1), low-passed."""
    frontal = data[:, :2].mean(axis=1)
    sos = signal.butter(4, lowpass_hz, btype="lowpass", fs=rate_hz, output="sos")
    return signal.sosfiltfilt(sos, frontal, padlen=min(len(frontal) - 1, int(rate_hz)))


def ica_artifact_reject(
    data: np.ndarray,
    rate_hz: float,
    seed: int = 0,
    corr_threshold: float = 0.7,
    kurtosis_threshold: float = 5.0,
    max_iter: int = 500,
    tol: float = 1e-6,
    eog_lowpass_hz: float = 4.0,
) -> tuple[np.ndarray, IcaModel, ArtifactReport]:
    """Fit ICA on a recording block, reject artifact components, remix.

    A component is rejected iff its |Pearson correlation| with the EOG
    proxy exceeds ``corr_threshold`` or its |excess kurtosis| exceeds
    ``kurtosis_threshold``. On non-convergence the transform falls back
    to identity and the report is flagged.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 6:
        raise ValueError(f"ICA expects [n, >=6 channels], got {x.shape}")
    if x.shape[0] < 10.0 * rate_hz:
        raise TooShortError(
            f"ICA fit needs >= 10 s of data ({int(10 * rate_hz)} samples), got {x.shape[0]}"
        )

    mean, unmixing, mixing, converged, n_iter = fit_ica(
        x, seed=seed, max_iter=max_iter, tol=tol
    )
    report = ArtifactReport(ica_converged=converged)
    if not converged:
        model = IcaModel(mean, unmixing, mixing, [], False, n_iter, seed)
        return x.copy(), model, report

    sources = unmixing @ (x - mean).T  # [k, n]
    proxy = _eog_proxy(x, rate_hz, eog_lowpass_hz)
    removed: list[int] = []
    for i in range(sources.shape[0]):
        src = sources[i]
        if src.std() == 0.0 or proxy.std() == 0.0:
            corr = 0.0
        else:
            corr = float(np.corrcoef(src, proxy)[0, 1])
        kurt = float(stats.kurtosis(src, fisher=True, bias=True))
        if abs(corr) > corr_threshold or abs(kurt) > kurtosis_threshold:
            removed.append(i)

    model = IcaModel(mean, unmixing, mixing, removed, True, n_iter, seed)
    report.n_components_removed = len(removed)
    report.removed_indices = removed
    return model.apply(x), model, report


def wavelet_despike(
    x: np.ndarray, levels: int = 5, threshold_scale: float = 4.0
) -> tuple[np.ndarray, int]:
    """Clamp outlier detail coefficients of a single channel.

    Detail coefficients beyond ``threshold_scale * MAD / 0.6745`` per
    level are clamped to the threshold (sign preserved), then the signal
    is rebuilt. Returns (cleaned signal, number of clamped coefficients).
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < 2**levels:
        raise TooShortError(f"despike needs >= {2 ** levels} samples, got {len(x)}")
    coeffs, pads = wavedec(x, levels)
    n_clamped = 0
    for lvl in range(levels):  # detail bands only; approximation untouched
        d = coeffs[lvl]
        mad = float(np.median(np.abs(d - np.median(d))))
        # the 1e-10 floor keeps float-noise coefficients of flat signals
        # from registering as spikes
        thr = max(threshold_scale * mad / 0.6745, 1e-10)
        over = np.abs(d) > thr
        n_clamped += int(over.sum())
        coeffs[lvl] = np.clip(d, -thr, thr) if over.any() else d
    return waverec(coeffs, pads), n_clamped


def despike_channels(
    data: np.ndarray,
    channel_names: tuple[str, ...],
    levels: int = 5,
    threshold_scale: float = 4.0,
) -> tuple[np.ndarray, dict[str, int]]:
    """Despike every column; returns cleaned data and per-channel counts."""
    out = np.empty_like(np.asarray(data, dtype=np.float64))
    counts: dict[str, int] = {}
    for c, name in enumerate(channel_names):
        out[:, c], counts[name] = wavelet_despike(data[:, c], levels, threshold_scale)
    return out, counts


@dataclass(frozen=True)
class PupilReflexFit:
    """Least-squares luminance regression fitted across trials."""

    slope: float  # mm per luminance unit
    intercept: float
    mean_luminance: float
    n_trials: int


def _pupil_columns(trial: Trial) -> tuple[int, int, int, int]:
    names = trial.eye_channel_names
    return (
        names.index("pupil_left_mm"),
        names.index("pupil_right_mm"),
        names.index("valid_left"),
        names.index("valid_right"),
    )


def combined_pupil(trial: Trial) -> tuple[np.ndarray, np.ndarray]:
    """Per-sample mean of the valid eyes' pupil diameters.

    Returns (series, valid mask); samples with neither eye valid hold
    NaN in the series.
    """
    pl, pr, vl, vr = _pupil_columns(trial)
    eye = trial.eye_epoch
    left_ok = eye[:, vl] > 0.5
    right_ok = eye[:, vr] > 0.5
    total = left_ok.astype(float) + right_ok.astype(float)
    summed = np.where(left_ok, eye[:, pl], 0.0) + np.where(right_ok, eye[:, pr], 0.0)
    with np.errstate(invalid="ignore"):
        series = np.where(total > 0, summed / np.maximum(total, 1.0), np.nan)
    return series, total > 0


def pupil_light_reflex_remove(
    trials: list[Trial], min_trials: int = 5
) -> tuple[list[Trial], PupilReflexFit]:
    """Regress luminance out of pupil diameter across trials.

    Fits pupil_mean ~ a + b * luminance over trials that carry a
    luminance value, then shifts every pupil sample of those trials by
    ``-b * (luminance - mean luminance)``. With constant luminance the
    slope is pinned to 0 (degenerate design). Trials without luminance
    pass through unchanged.
    """
    lit = [(i, t) for i, t in enumerate(trials) if t.luminance is not None]
    if len(lit) < min_trials:
        raise InsufficientLuminanceError(
            f"only {len(lit)} trials carry luminance (need >= {min_trials})"
        )

    lums = np.array([t.luminance for _, t in lit], dtype=np.float64)
    means = np.empty(len(lit))
    for j, (_, t) in enumerate(lit):
        series, valid = combined_pupil(t)
        means[j] = float(np.nanmean(series[valid])) if valid.any() else np.nan
    usable = np.isfinite(means)
    lums_u, means_u = lums[usable], means[usable]
    if len(lums_u) < min_trials:
        raise InsufficientLuminanceError(
            f"only {len(lums_u)} trials have both luminance and valid pupil data"
        )

    mean_lum = float(lums_u.mean())
    if float(np.ptp(lums_u)) < 1e-12:
        slope, intercept = 0.0, float(means_u.mean())
    else:
        design = np.column_stack([np.ones_like(lums_u), lums_u])
        (intercept, slope), *_ = np.linalg.lstsq(design, means_u, rcond=None)
        slope, intercept = float(slope), float(intercept)

    corrected: list[Trial] = []
    for t in trials:
        if t.luminance is None:
            corrected.append(t)
            continue
        pl, pr, _, _ = _pupil_columns(t)
        eye = t.eye_epoch.copy()
        shift = slope * (t.luminance - mean_lum)
        eye[:, pl] -= shift
        eye[:, pr] -= shift
        corrected.append(t.with_eye_epoch(eye))
    return corrected, PupilReflexFit(slope, intercept, mean_lum, len(lums_u))
