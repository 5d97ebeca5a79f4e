import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_eye_trial

from neuropref.errors import (
    InsufficientLuminanceError,
    NyquistViolationError,
    TooShortError,
)
from neuropref.preprocess import (
    FilterSpec,
    bandpass_notch,
    despike_channels,
    ica_artifact_reject,
    pupil_light_reflex_remove,
    wavelet_despike,
)
from neuropref.synth import BLINK_TOPOGRAPHY, pink_noise

FS = 250.0


def _tone(freq, seconds=10.0, fs=FS, phase=0.0):
    t = np.arange(int(seconds * fs)) / fs
    return np.sin(2 * np.pi * freq * t + phase)


def _interior_rms_ratio(x, y, trim_s=1.0, fs=FS):
    k = int(trim_s * fs)
    return float(np.sqrt(np.mean(y[k:-k] ** 2)) / np.sqrt(np.mean(x[k:-k] ** 2)))


class TestBandpassNotch:
    def test_60hz_tone_attenuated_at_least_40db(self):
        x = _tone(60.0)
        ratio = _interior_rms_ratio(x, bandpass_notch(x, FS))
        assert ratio <= 0.01  # >= 40 dB

    def test_10hz_tone_passes_within_12_percent(self):
        x = _tone(10.0)
        ratio = _interior_rms_ratio(x, bandpass_notch(x, FS))
        assert abs(ratio - 1.0) <= 0.12

    def test_zero_signal_stays_zero(self):
        y = bandpass_notch(np.zeros(500), FS)
        assert np.abs(y).max() == 0.0

    def test_output_length_and_channels_preserved(self):
        x = np.random.default_rng(0).normal(size=(500, 6))
        y = bandpass_notch(x, FS)
        assert y.shape == x.shape

    def test_nyquist_violation(self):
        with pytest.raises(NyquistViolationError):
            bandpass_notch(np.zeros(500), 200.0, FilterSpec(band_high_hz=120.0))

    @settings(max_examples=10, deadline=None)
    @given(
        a=st.floats(-3, 3, allow_nan=False),
        b=st.floats(-3, 3, allow_nan=False),
        seed=st.integers(0, 100),
    )
    def test_linearity(self, a, b, seed):
        rng = np.random.default_rng(seed)
        x1, x2 = rng.normal(size=400), rng.normal(size=400)
        lhs = bandpass_notch(a * x1 + b * x2, FS)
        rhs = a * bandpass_notch(x1, FS) + b * bandpass_notch(x2, FS)
        scale = max(np.abs(rhs).max(), 1e-9)
        assert np.abs(lhs - rhs).max() / scale < 1e-9

    def test_works_on_single_2s_epoch(self):
        x = np.random.default_rng(1).normal(size=500)
        y = bandpass_notch(x, FS)
        assert y.shape == x.shape and np.isfinite(y).all()


class TestIcaArtifactReject:
    def _pink_block(self, seed, seconds=40.0):
        rng = np.random.default_rng(seed)
        n = int(seconds * FS)
        return np.column_stack([pink_noise(rng, n, 20.0) for _ in range(6)])

    def test_clean_noise_removes_nothing(self):
        data = self._pink_block(0)
        _, _, report = ica_artifact_reject(data, FS, seed=0)
        assert report.n_components_removed == 0

    def test_planted_blinks_are_removed(self):
        from scipy import signal as sg

        data = self._pink_block(1)
        n = len(data)
        rng = np.random.default_rng(2)
        blink = np.hanning(int(0.3 * FS))
        for s in rng.integers(0, n - len(blink), size=12):
            data[s : s + len(blink)] += 80.0 * blink[:, None] * BLINK_TOPOGRAPHY[None, :]

        sos = sg.butter(4, [0.5, 3.0], btype="bandpass", fs=FS, output="sos")
        pre_var = sg.sosfiltfilt(sos, data[:, 0]).var()
        cleaned, _, report = ica_artifact_reject(data, FS, seed=0)
        post_var = sg.sosfiltfilt(sos, cleaned[:, 0]).var()

        assert report.n_components_removed >= 1
        assert post_var <= 0.5 * pre_var  # >= 50% reduction on Fp1

    def test_zero_rejections_reconstruct_identity(self):
        data = self._pink_block(3)
        cleaned, _, report = ica_artifact_reject(
            data, FS, seed=0, corr_threshold=2.0, kurtosis_threshold=np.inf
        )
        assert report.n_components_removed == 0
        rel = np.abs(cleaned - data).max() / np.abs(data).max()
        assert rel < 1e-9

    def test_too_short_fit_raises(self):
        data = np.random.default_rng(0).normal(size=(int(5 * FS), 6))
        with pytest.raises(TooShortError):
            ica_artifact_reject(data, FS)

    def test_deterministic_given_seed(self):
        data = self._pink_block(4)
        a, _, _ = ica_artifact_reject(data, FS, seed=9)
        b, _, _ = ica_artifact_reject(data, FS, seed=9)
        assert np.array_equal(a, b)


class TestWaveletDespike:
    def test_subthreshold_signal_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=512)
        cleaned, n = wavelet_despike(x, threshold_scale=50.0)  # nothing over
        assert n == 0
        assert np.abs(cleaned - x).max() < 1e-8

    def test_impulse_amplitude_strictly_reduced(self):
        x = np.zeros(512)
        x += 0.01 * np.sin(2 * np.pi * 5 * np.arange(512) / FS)  # non-degenerate MAD
        x[200] += 100.0
        cleaned, n = wavelet_despike(x)
        assert n >= 1
        assert np.abs(cleaned).max() < np.abs(x).max()

    def test_constant_signal_unchanged(self):
        x = np.full(512, 3.25)
        cleaned, n = wavelet_despike(x)
        assert n == 0
        assert np.abs(cleaned - x).max() < 1e-8

    def test_length_preserved_on_non_dyadic(self):
        x = np.random.default_rng(1).normal(size=500)
        cleaned, _ = wavelet_despike(x)
        assert cleaned.shape == x.shape

    def test_too_short(self):
        with pytest.raises(TooShortError):
            wavelet_despike(np.zeros(16), levels=5)

    def test_despike_channels_counts(self):
        x = np.random.default_rng(2).normal(size=(512, 2))
        x[100, 0] += 500.0
        cleaned, counts = despike_channels(x, ("a", "b"))
        assert set(counts) == {"a", "b"}
        assert counts["a"] >= 1


class TestPupilLightReflexRemove:
    def _trials(self, slope, lums, noise=0.0, seed=0, dilation=None):
        rng = np.random.default_rng(seed)
        trials = []
        for i, lum in enumerate(lums):
            level = 3.0 + slope * lum + noise * rng.standard_normal()
            if dilation is not None:
                level += dilation[i]
            pupil = np.full(120, level)
            trials.append(
                make_eye_trial(
                    np.full(120, 0.5), np.full(120, 0.5),
                    pupil_left=pupil, event_id=f"t{i}", luminance=lum,
                )
            )
        return trials

    def test_exactly_linear_pupil_equalizes_means(self):
        lums = np.linspace(0.2, 0.9, 10)
        trials = self._trials(-0.8, lums)
        corrected, fit = pupil_light_reflex_remove(trials)
        means = [c.eye_epoch[:, 0].mean() for c in corrected]
        assert np.ptp(means) < 1e-9
        assert abs(fit.slope - (-0.8)) < 1e-9

    def test_constant_luminance_pins_slope_to_zero(self):
        trials = self._trials(-0.8, [0.5] * 8)
        corrected, fit = pupil_light_reflex_remove(trials)
        assert fit.slope == 0.0
        for before, after in zip(trials, corrected):
            assert np.array_equal(before.eye_epoch, after.eye_epoch)

    def test_planted_gain_recovered_within_tolerance(self):
        # generator-style: slope -0.8 with realistic pupil noise
        rng = np.random.default_rng(5)
        lums = rng.uniform(0.2, 0.9, size=60)
        trials = self._trials(-0.8, lums, noise=0.035, seed=6)
        _, fit = pupil_light_reflex_remove(trials)
        assert abs(fit.slope - (-0.8)) <= 0.05

    def test_insufficient_luminance_raises(self):
        trials = self._trials(-0.8, [0.4, 0.6])
        with pytest.raises(InsufficientLuminanceError):
            pupil_light_reflex_remove(trials)

    def test_trials_without_luminance_pass_through(self):
        trials = self._trials(-0.8, np.linspace(0.2, 0.9, 6))
        bare = make_eye_trial(np.full(120, 0.5), np.full(120, 0.5), event_id="nolum")
        corrected, _ = pupil_light_reflex_remove(trials + [bare])
        assert np.array_equal(corrected[-1].eye_epoch, bare.eye_epoch)
