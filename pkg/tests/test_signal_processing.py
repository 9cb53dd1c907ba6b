import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kdessi.dataset import synthesize_trial
from kdessi.errors import FormatError, InvalidInputError
from kdessi.signal_processing import (
    EnvelopeSpec,
    FilterSpec,
    TimeSeries,
    butterworth_bandpass,
    design_bandpass,
    minimax_threshold,
    process_recording,
    read_recording_csv,
    rectify,
    rms_envelope,
    wavelet_denoise,
    write_recording_csv,
    zero_mean,
)

FS = 1000.0


def naive_rms(x, nw):
    """Window of nw samples [n - nw/2, n + nw/2) for n = nw/2 .. L - nw/2."""
    half = nw // 2
    out = []
    for n in range(half, len(x) - half + 1):
        acc = 0.0
        for i in range(n - half, n + half):
            acc += x[i] * x[i]
        out.append(np.sqrt(acc / nw))
    return np.array(out)


def sos_magnitude(sos, freq_hz, fs=FS):
    """|H(e^{jw})| evaluated directly from the biquad coefficients."""
    z = np.exp(1j * 2 * np.pi * freq_hz / fs)
    h = 1.0 + 0j
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
    return abs(h)


def sine(freq, n=4000, amp=1.0):
    return amp * np.sin(2 * np.pi * freq * np.arange(n) / FS)


def tone_amplitude(y, freq, start):
    """Amplitude of the ``freq`` component of ``y[start:]`` by projection on sin/cos."""
    t = np.arange(start, len(y)) / FS
    basis = np.column_stack([np.sin(2 * np.pi * freq * t), np.cos(2 * np.pi * freq * t)])
    coef, *_ = np.linalg.lstsq(basis, y[start:], rcond=None)
    return float(np.hypot(*coef))


# -- TimeSeries / zero mean / rectify ------------------------------------------


def test_timeseries_validation():
    with pytest.raises(InvalidInputError):
        TimeSeries(np.zeros((0, 3)))
    with pytest.raises(InvalidInputError):
        TimeSeries(np.zeros((5, 3)), sample_rate=0)
    assert TimeSeries(np.arange(4.0)).channels == 1


def test_zero_mean_examples():
    np.testing.assert_allclose(zero_mean(TimeSeries([1.0, 2.0, 3.0])).data[:, 0], [-1, 0, 1])
    np.testing.assert_array_equal(zero_mean(TimeSeries(np.zeros(5))).data, 0)
    np.testing.assert_allclose(zero_mean(TimeSeries(np.full(7, 4.2))).data, 0, atol=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 50), st.integers(1, 3)), elements=st.floats(-1e3, 1e3)))
def test_zero_mean_property(x):
    out = zero_mean(TimeSeries(x)).data
    assert out.shape == x.shape
    scale = max(np.abs(x).max(), 1.0)
    assert np.all(np.abs(out.mean(axis=0)) <= 1e-9 * scale)


def test_rectify_examples():
    np.testing.assert_array_equal(rectify(TimeSeries([-1.0, 2.0, -3.0])).data[:, 0], [1, 2, 3])


@given(arrays(np.float64, st.integers(1, 40), elements=st.floats(-100, 100)))
def test_rectify_idempotent_and_non_negative(x):
    once = rectify(TimeSeries(x)).data
    assert np.all(once >= 0)
    np.testing.assert_array_equal(rectify(TimeSeries(once)).data, once)


# -- wavelet denoising ---------------------------------------------------------


def test_wavelet_zero_signal_stays_zero():
    np.testing.assert_array_equal(wavelet_denoise(TimeSeries(np.zeros((256, 3)))).data, 0)


@pytest.mark.parametrize("n", [16, 17, 100, 1001, 4096])
def test_wavelet_zero_threshold_reconstructs(n):
    x = np.random.default_rng(n).standard_normal((n, 3))
    out = wavelet_denoise(TimeSeries(x), threshold=0).data
    assert out.shape == x.shape
    assert np.max(np.abs(out - x)) <= 1e-8


def test_wavelet_rejects_short_input():
    with pytest.raises(InvalidInputError):
        wavelet_denoise(TimeSeries(np.zeros(15)))


def test_wavelet_removes_white_noise_energy():
    for seed in range(20):
        x = np.random.default_rng(seed).standard_normal(4096)
        assert wavelet_denoise(TimeSeries(x)).data.var() < x.var()


def test_wavelet_improves_noisy_sine():
    clean = sine(50, 4096)
    noisy = clean + np.random.default_rng(0).standard_normal(4096) * clean.std()  # 0 dB SNR
    out = wavelet_denoise(TimeSeries(noisy)).data[:, 0]
    assert np.sqrt(np.mean((out - clean) ** 2)) < np.sqrt(np.mean((noisy - clean) ** 2))


def test_minimax_threshold_formula():
    d1 = np.array([0.6745, -0.6745, 0.6745])
    assert minimax_threshold(d1, 1024) == pytest.approx(0.3936 + 0.1829 * 10)


# -- Butterworth ---------------------------------------------------------------


def test_filter_corners_are_minus_3db():
    sos = design_bandpass(FilterSpec(), FS)
    for f in (20.0, 400.0):
        assert 20 * np.log10(sos_magnitude(sos, f)) == pytest.approx(-3.0103, abs=0.5)


def test_single_bandpass_switch_also_has_3db_corners():
    sos = design_bandpass(FilterSpec(single_bandpass=True), FS)
    assert len(sos) == 5  # order 10 in five sections
    for f in (20.0, 400.0):
        assert 20 * np.log10(sos_magnitude(sos, f)) == pytest.approx(-3.0103, abs=0.5)


def test_filter_blocks_dc():
    out = butterworth_bandpass(TimeSeries(np.ones(4000))).data[:, 0]
    assert np.max(np.abs(out[2000:])) < 1e-3


def test_filter_passes_100hz():
    out = butterworth_bandpass(TimeSeries(sine(100))).data[:, 0]
    assert tone_amplitude(out, 100, 2000) == pytest.approx(1.0, rel=0.01)
    assert sos_magnitude(design_bandpass(FilterSpec(), FS), 100) == pytest.approx(1.0, rel=0.01)


def test_filter_attenuates_480hz():
    out = butterworth_bandpass(TimeSeries(sine(480))).data[:, 0]
    assert 20 * np.log10(tone_amplitude(out, 480, 2000)) < -20


def test_zero_phase_option_has_no_delay():
    x = sine(100)
    causal = butterworth_bandpass(TimeSeries(x)).data[:, 0]
    zp = butterworth_bandpass(TimeSeries(x), FilterSpec(zero_phase=True)).data[:, 0]
    mid = slice(1000, 3000)
    assert np.max(np.abs(zp[mid] - x[mid])) < 0.02
    assert np.max(np.abs(causal[mid] - x[mid])) > 0.1


@pytest.mark.parametrize("spec", [
    FilterSpec(high_pass_hz=450, low_pass_hz=400),
    FilterSpec(low_pass_hz=500),
    FilterSpec(high_pass_hz=0),
    FilterSpec(order=9),
])
def test_filter_spec_validation(spec):
    with pytest.raises(InvalidInputError):
        design_bandpass(spec, FS)


@settings(max_examples=25)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**16))
def test_filter_is_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 600, 2))
    f = lambda v: butterworth_bandpass(TimeSeries(v)).data  # noqa: E731
    np.testing.assert_allclose(f(a * x + b * y), a * f(x) + b * f(y), atol=1e-9)


# -- RMS envelope --------------------------------------------------------------


def test_rms_envelope_matches_naive_loop():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(5000) * rng.uniform(0.1, 10)
    out = rms_envelope(TimeSeries(x)).data[:, 0]
    assert out.shape == (5000 - 100 + 1,)
    np.testing.assert_allclose(out, naive_rms(x, 100), rtol=0, atol=1e-9)


def test_rms_envelope_constant():
    for nw in (2, 10, 100):
        np.testing.assert_allclose(rms_envelope(TimeSeries(np.full((300, 2), 1.7)), EnvelopeSpec(nw)).data, 1.7)


def test_rms_envelope_impulse():
    x = np.zeros(1000)
    x[400] = 5.0
    out = rms_envelope(TimeSeries(x)).data[:, 0]
    # output index k covers input [k, k + 100)
    covered = (np.arange(len(out)) <= 400) & (np.arange(len(out)) > 300)
    np.testing.assert_allclose(out[covered], np.sqrt(25 / 100))
    np.testing.assert_allclose(out[~covered], 0, atol=1e-12)


def test_rms_envelope_validation():
    with pytest.raises(InvalidInputError):
        rms_envelope(TimeSeries(np.zeros(50)), EnvelopeSpec(100))
    for bad in (0, 3, -2):
        with pytest.raises(InvalidInputError):
            EnvelopeSpec(bad)


@settings(max_examples=40)
@given(arrays(np.float64, st.integers(4, 120), elements=st.floats(-1e3, 1e3)), st.sampled_from([2, 4, 10]))
def test_rms_envelope_non_negative_and_exact(x, nw):
    if len(x) < nw:
        return
    out = rms_envelope(TimeSeries(x), EnvelopeSpec(nw)).data[:, 0]
    assert np.all(out >= 0)
    np.testing.assert_allclose(out, naive_rms(x, nw), atol=1e-9 * max(1.0, np.abs(x).max()))


# -- full chain ----------------------------------------------------------------


def test_process_recording_zero_input():
    np.testing.assert_array_equal(process_recording(TimeSeries(np.zeros((2000, 3)))).data, 0)


def test_process_recording_is_the_manual_composition():
    x = TimeSeries(np.random.default_rng(1).standard_normal((3000, 3)))
    manual = rms_envelope(rectify(butterworth_bandpass(wavelet_denoise(zero_mean(x)))))
    np.testing.assert_array_equal(process_recording(x).data, manual.data)


def test_process_recording_finds_burst_center():
    # envelope noise is ~7% RMS, so a burst much wider than the window has a flat, jittery top
    for seed in range(20):
        raw, centers = synthesize_trial(np.random.default_rng(seed), n_words=1, lead=3000, spacing=4000,
                                        burst_sigma=100)
        env = process_recording(raw)
        peak = int(np.argmax(env.data.sum(axis=1))) + 50  # envelope index 0 = input index 50
        assert abs(peak - centers[0]) <= 50


# -- files ---------------------------------------------------------------------


def test_recording_csv_round_trip(tmp_path):
    ts = TimeSeries(np.random.default_rng(0).standard_normal((20, 3)), 1000.0)
    path = tmp_path / "rec.csv"
    write_recording_csv(path, ts, manifest={"subject_id": "s1", "word_label": "Alfa", "trial_id": 3})
    assert path.read_text().splitlines()[0] == "sample,lao,dao,zm"
    loaded, manifest = read_recording_csv(path)
    np.testing.assert_array_equal(loaded.data, ts.data)
    assert manifest["trial_id"] == 3
    assert json.loads(path.with_suffix(".json").read_text())["sample_rate_hz"] == 1000.0


def test_recording_csv_errors(tmp_path):
    with pytest.raises(FileNotFoundError, match="missing.csv"):
        read_recording_csv(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("time,a\n0,1\n")
    with pytest.raises(FormatError):
        read_recording_csv(bad)
    bad.write_text("sample,a,b\n0,1,2\n1,3\n")
    with pytest.raises(FormatError):
        read_recording_csv(bad)
