import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kdessi.dataset import synthesize_trial
from kdessi.errors import InvalidInputError
from kdessi.signal_processing import TimeSeries, process_recording
from kdessi.word_extraction import (
    PeakCountWarning,
    WordSegment,
    candidate_centers,
    detect_peaks,
    extract_words,
    localize_peaks,
    localize_word,
    window_power,
)

HALF_WINDOW = 50  # envelope index 0 sits at raw index 50


def bumps(centers, length, heights=None, sigma=300.0):
    t = np.arange(length)
    heights = np.ones(len(centers)) if heights is None else heights
    return sum(h * np.exp(-0.5 * ((t - c) / sigma) ** 2) for c, h in zip(centers, heights))


def triangle(apex, length, half_width=900):
    return np.maximum(0.0, 1 - np.abs(np.arange(length) - apex) / half_width)


def trial_envelope(seed, **kw):
    raw, centers = synthesize_trial(np.random.default_rng(seed), **kw)
    return process_recording(raw), centers - HALF_WINDOW


# -- detect_peaks --------------------------------------------------------------


def test_flat_signal_has_no_peaks():
    assert detect_peaks(np.zeros(10000)).size == 0


def test_ten_bumps_found():
    centers = 2000 + 4000 * np.arange(10)
    found = detect_peaks(bumps(centers, 42000))
    assert len(found) == 10
    assert np.all(np.abs(found - centers) <= 5)


def test_two_half_height_bumps_dropped():
    centers = 2000 + 4000 * np.arange(12)
    heights = np.ones(12)
    heights[[3, 8]] = 0.5
    found = detect_peaks(bumps(centers, 50000, heights))
    np.testing.assert_array_equal(found, np.delete(centers, [3, 8]))


def test_min_distance_discards_less_prominent_neighbour():
    x = bumps([5000, 7000, 12000], 20000, [1.0, 0.9, 0.8], sigma=200)
    np.testing.assert_array_equal(detect_peaks(x), [5000, 12000])


def test_noise_ripples_below_relative_prominence_ignored():
    x = bumps([4000, 12000], 20000) + bumps([8000], 20000, [0.05], sigma=50)
    np.testing.assert_array_equal(detect_peaks(x), [4000, 12000])
    np.testing.assert_array_equal(detect_peaks(x, min_relative_prominence=0), [4000, 8000, 12000])


def test_detect_peaks_rejects_empty():
    with pytest.raises(InvalidInputError):
        detect_peaks([])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_peak_list_invariants(seed):
    rng = np.random.default_rng(seed)
    x = np.convolve(rng.random(20000), np.ones(200) / 200, mode="same")
    found = detect_peaks(x)
    assert len(found) <= 10
    assert np.all(np.diff(found) > 3000)


# -- localize_peaks ------------------------------------------------------------


def test_median_of_three():
    np.testing.assert_array_equal(localize_peaks([[100], [105], [98]]), [100])
    np.testing.assert_array_equal(localize_peaks([[7, 9000], [7, 9000], [7, 9000]]), [7, 9000])


def test_mismatched_counts_pair_by_rank_with_warning():
    a = list(range(1000, 41000, 4000))
    with pytest.warns(PeakCountWarning):
        out = localize_peaks([a, a, a[:9]])
    assert len(out) == 9


# -- localize_word -------------------------------------------------------------


def env3(x):
    return TimeSeries(np.repeat(np.asarray(x)[:, None], 3, axis=1))


def test_symmetric_bump_keeps_center():
    seg = localize_word(env3(triangle(5000, 10000)), 5000)
    assert seg.center == 5000
    assert seg.data.shape == (1500, 3)


def test_offset_apex_is_found_on_the_grid():
    assert localize_word(env3(triangle(5060, 10000)), 5000).center == 5060


def test_window_clamped_at_the_start():
    env = env3(triangle(300, 10000))
    seg = localize_word(env, 300)
    np.testing.assert_array_equal(seg.data, env.data[:1500])
    assert seg.center == 750


def test_window_clamped_at_the_end():
    env = env3(triangle(9900, 10000))
    seg = localize_word(env, 9900)
    np.testing.assert_array_equal(seg.data, env.data[-1500:])


def test_short_envelope_rejected():
    with pytest.raises(InvalidInputError):
        localize_word(env3(np.ones(1499)), 700)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 6000))
def test_chosen_center_beats_every_candidate(seed, peak):
    rng = np.random.default_rng(seed)
    env = TimeSeries(np.abs(np.cumsum(rng.standard_normal((6000, 3)), axis=0)))
    seg = localize_word(env, peak)
    best = window_power(env.data, seg.center)
    assert all(best >= window_power(env.data, int(c)) for c in candidate_centers(peak))
    assert seg.data.shape == (1500, 3)


def test_word_segment_validation():
    with pytest.raises(InvalidInputError):
        WordSegment(np.zeros((1499, 3)), 0)
    with pytest.raises(InvalidInputError):
        WordSegment(np.zeros((1500, 3)), 0, label=26)


# -- extract_words -------------------------------------------------------------


def test_extract_words_on_synthetic_trial():
    env, truth = trial_envelope(0)
    words = extract_words(env, label=4)
    assert len(words) == 10
    assert all(w.label == 4 and w.data.shape == (1500, 3) for w in words)
    assert np.all(np.abs(np.array([w.center for w in words]) - truth) <= 100)
    assert np.all(np.diff([w.center for w in words]) > 0)


def test_missing_burst_gives_partial_result_and_warning():
    present = [True] * 10
    present[6] = False
    env, truth = trial_envelope(1, present=present, drift=0.0)
    with pytest.warns(PeakCountWarning):
        words = extract_words(env)
    assert len(words) == 9
    kept = np.delete(truth, 6)
    assert np.all(np.abs(np.array([w.center for w in words]) - kept) <= 100)


def test_zero_envelope_gives_empty_result_and_warning():
    with pytest.warns(PeakCountWarning):
        assert extract_words(TimeSeries(np.zeros((40000, 3)))) == []


@pytest.mark.parametrize("shift", [-700, 333, 1200])
def test_extraction_is_translation_equivariant(shift):
    env, _ = trial_envelope(2)
    data = env.data
    pad = np.full((abs(shift), 3), data.min())
    shifted = np.vstack([pad, data]) if shift > 0 else data[-shift:]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PeakCountWarning)
        base = [w.center for w in extract_words(env)]
        moved = [w.center for w in extract_words(TimeSeries(shifted))]
    if shift < 0:
        # dropping leading samples may cut the first word's window; compare interior words
        base, moved = base[1:], moved[1:]
    np.testing.assert_array_equal(np.array(moved) - np.array(base), shift)
