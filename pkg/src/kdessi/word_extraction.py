"""Split a 10-repetition trial envelope into fixed-size word windows.

Peaks are found per channel, paired across channels by rank, reduced to one
consensus index per word (median), and each word window is then re-centred
on the position of maximum in-window power near that consensus.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import find_peaks, peak_prominences

from .errors import InvalidInputError
from .signal_processing import TimeSeries

WORD_LENGTH = 1500
MIN_PEAK_DISTANCE = 3000
WORDS_PER_TRIAL = 10
SEARCH_RADIUS = 150
SEARCH_STEP = 10
# peaks below this fraction of the channel's top prominence are treated as noise
MIN_RELATIVE_PROMINENCE = 0.1


class PeakCountWarning(UserWarning):
    """Channels disagree on the number of peaks, or fewer words than expected were found."""


@dataclass(frozen=True)
class WordSegment:
    data: np.ndarray  # (1500, channels)
    center: int
    label: Optional[int] = None

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != WORD_LENGTH:
            raise InvalidInputError(f"word segment must be {WORD_LENGTH} samples long, got {self.data.shape}")
        if self.label is not None and not 0 <= self.label < 26:
            raise InvalidInputError(f"label {self.label} outside [0, 26)")


def detect_peaks(channel: Sequence[float], min_distance: int = MIN_PEAK_DISTANCE, max_peaks: int = WORDS_PER_TRIAL,
                 min_relative_prominence: float = MIN_RELATIVE_PROMINENCE):
    """Indices of the ``max_peaks`` most prominent peaks, spaced more than ``min_distance`` apart.

    Local maxima are ranked by topographic prominence (ties: earlier index
    first), accepted greedily while every accepted pair stays more than
    ``min_distance`` samples apart, and returned in ascending order. Peaks
    whose prominence is below ``min_relative_prominence`` times the largest
    one are ignored, so a silent repetition is not filled in by a noise ripple.
    """
    x = np.asarray(channel, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise InvalidInputError("detect_peaks expects a non-empty 1-D sequence")
    candidates, _ = find_peaks(x)
    if candidates.size == 0:
        return np.array([], dtype=np.int64)
    prom = peak_prominences(x, candidates)[0]
    order = np.lexsort((candidates, -prom))
    floor = max(min_relative_prominence * prom.max(), 0.0)
    kept: list[int] = []
    for i in order:
        if prom[i] <= 0 or prom[i] < floor:
            break
        idx = int(candidates[i])
        if all(abs(idx - k) > min_distance for k in kept):
            kept.append(idx)
            if len(kept) == max_peaks:
                break
    return np.array(sorted(kept), dtype=np.int64)


def localize_peaks(peaks: Sequence[Sequence[int]]) -> np.ndarray:
    """One consensus index per word: median of the rank-paired channel peaks."""
    if not peaks:
        return np.array([], dtype=np.int64)
    counts = [len(p) for p in peaks]
    k = min(counts)
    if len(set(counts)) > 1:
        warnings.warn(f"channels found different peak counts {counts}; pairing the first {k} by rank",
                      PeakCountWarning, stacklevel=2)
    if k == 0:
        return np.array([], dtype=np.int64)
    stacked = np.array([np.asarray(p[:k]) for p in peaks], dtype=np.int64)
    return np.floor(np.median(stacked, axis=0)).astype(np.int64)


def candidate_centers(peak: int) -> np.ndarray:
    return np.arange(peak - SEARCH_RADIUS, peak + SEARCH_RADIUS + 1, SEARCH_STEP)


def window_start(center: int, length: int) -> int:
    """Start of the ``WORD_LENGTH`` window for ``center``, shifted to lie inside ``[0, length)``."""
    return int(min(max(center - WORD_LENGTH // 2, 0), length - WORD_LENGTH))


def window_power(envelope: np.ndarray, center: int) -> float:
    start = window_start(center, envelope.shape[0])
    w = envelope[start : start + WORD_LENGTH]
    return float(np.sum(w * w))


def localize_word(envelope: TimeSeries, peak: int, label: Optional[int] = None) -> WordSegment:
    """Slide a 1500-sample window over ``peak +- 150`` (step 10) and keep the most powerful one."""
    data = envelope.data
    n = data.shape[0]
    if n < WORD_LENGTH:
        raise InvalidInputError(f"envelope has {n} samples, need at least {WORD_LENGTH}")
    best_start, best_power = None, -np.inf
    for c in candidate_centers(int(peak)):
        start = window_start(int(c), n)
        power = window_power(data, int(c))
        if power > best_power:
            best_start, best_power = start, power
    return WordSegment(data[best_start : best_start + WORD_LENGTH].copy(), best_start + WORD_LENGTH // 2, label)


def extract_words(envelope: TimeSeries, label: Optional[int] = None,
                  expected_words: int = WORDS_PER_TRIAL) -> list[WordSegment]:
    """Detect, align and window every word of a trial, in time order."""
    per_channel = [detect_peaks(envelope.data[:, ch], max_peaks=expected_words) for ch in range(envelope.channels)]
    consensus = localize_peaks(per_channel)
    words = [localize_word(envelope, int(p), label) for p in consensus]
    if len(words) < expected_words:
        warnings.warn(f"found {len(words)} of {expected_words} words", PeakCountWarning, stacklevel=2)
    return words
