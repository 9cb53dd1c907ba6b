"""Raw sEMG -> RMS envelope.

The chain is zero-mean, db2 wavelet denoising, 20-400 Hz Butterworth
filtering, full-wave rectification and a sliding RMS window.  Signals are
stored ``(samples, channels)`` to match the recording CSV layout.
"""
from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pywt
from scipy import signal

from .errors import FormatError, InvalidInputError

CHANNEL_NAMES = ("lao", "dao", "zm")


@dataclass(frozen=True)
class TimeSeries:
    """Multi-channel signal, ``data`` shaped ``(samples, channels)``."""

    data: np.ndarray
    sample_rate: float = 1000.0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise InvalidInputError(f"TimeSeries needs a non-empty (samples, channels) array, got {data.shape}")
        if not self.sample_rate > 0:
            raise InvalidInputError("sample_rate must be positive")
        object.__setattr__(self, "data", data)

    @property
    def length(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    def with_data(self, data) -> "TimeSeries":
        return TimeSeries(data, self.sample_rate)


@dataclass(frozen=True)
class FilterSpec:
    order: int = 10
    high_pass_hz: float = 20.0
    low_pass_hz: float = 400.0
    single_bandpass: bool = False
    zero_phase: bool = False

    def validate(self, sample_rate: float):
        if self.order < 2 or self.order % 2:
            raise InvalidInputError("filter order must be even and >= 2")
        if not 0 < self.high_pass_hz < self.low_pass_hz < sample_rate / 2:
            raise InvalidInputError(
                f"need 0 < {self.high_pass_hz} < {self.low_pass_hz} < Nyquist ({sample_rate / 2})"
            )


@dataclass(frozen=True)
class EnvelopeSpec:
    window_samples: int = 100

    def __post_init__(self):
        if self.window_samples < 2 or self.window_samples % 2:
            raise InvalidInputError("window_samples must be even and >= 2")


def zero_mean(ts: TimeSeries) -> TimeSeries:
    return ts.with_data(ts.data - ts.data.mean(axis=0))


def minimax_threshold(detail_level1: np.ndarray, n: int) -> float:
    """Minimax threshold scaled by a MAD noise estimate from the finest details."""
    sigma = np.median(np.abs(detail_level1)) / 0.6745
    return float(sigma * (0.3936 + 0.1829 * np.log2(n)))


def wavelet_denoise(ts: TimeSeries, wavelet: str = "db2", level: int = 4, threshold: float | None = None) -> TimeSeries:
    """Soft-threshold every detail band of a ``level``-deep DWT.

    ``threshold=None`` picks the minimax threshold per channel; pass a number
    (e.g. 0) to override it.
    """
    if ts.length < 2**level:
        raise InvalidInputError(f"wavelet_denoise needs at least {2**level} samples, got {ts.length}")
    out = np.empty_like(ts.data)
    for ch in range(ts.channels):
        x = ts.data[:, ch]
        with warnings.catch_warnings():
            # short inputs trigger pywt's boundary-effect warning; the transform is still exact
            warnings.simplefilter("ignore", UserWarning)
            coeffs = pywt.wavedec(x, wavelet, mode="symmetric", level=level)
        thr = minimax_threshold(coeffs[-1], len(x)) if threshold is None else float(threshold)
        if thr > 0:
            coeffs[1:] = [pywt.threshold(c, thr, mode="soft") for c in coeffs[1:]]
        out[:, ch] = pywt.waverec(coeffs, wavelet, mode="symmetric")[: len(x)]
    return ts.with_data(out)


def design_bandpass(spec: FilterSpec, sample_rate: float) -> np.ndarray:
    """Second-order sections for the configured band.

    Default is a high-pass and a low-pass of ``spec.order`` each, cascaded;
    ``single_bandpass`` gives one band-pass of total order ``spec.order``.
    scipy's digital design applies the bilinear transform with pre-warping.
    """
    spec.validate(sample_rate)
    if spec.single_bandpass:
        return signal.butter(
            spec.order // 2, [spec.high_pass_hz, spec.low_pass_hz], btype="bandpass", fs=sample_rate, output="sos"
        )
    hp = signal.butter(spec.order, spec.high_pass_hz, btype="highpass", fs=sample_rate, output="sos")
    lp = signal.butter(spec.order, spec.low_pass_hz, btype="lowpass", fs=sample_rate, output="sos")
    return np.vstack([hp, lp])


def butterworth_bandpass(ts: TimeSeries, spec: FilterSpec = FilterSpec()) -> TimeSeries:
    sos = design_bandpass(spec, ts.sample_rate)
    if spec.zero_phase:
        return ts.with_data(signal.sosfiltfilt(sos, ts.data, axis=0))
    return ts.with_data(signal.sosfilt(sos, ts.data, axis=0))


def rectify(ts: TimeSeries) -> TimeSeries:
    return ts.with_data(np.abs(ts.data))


def rms_envelope(ts: TimeSeries, spec: EnvelopeSpec = EnvelopeSpec()) -> TimeSeries:
    """Centered sliding RMS over the valid range only.

    For window ``N`` the value at input position ``n`` is the RMS of the ``N``
    samples ``n - N/2 .. n + N/2 - 1``, for ``n`` from ``N/2`` to ``L - N/2``.
    The output therefore has ``L - N + 1`` samples and output index 0 sits at
    input index ``N/2``; no padding is applied.
    """
    nw = spec.window_samples
    if ts.length < nw:
        raise InvalidInputError(f"signal length {ts.length} shorter than window {nw}")
    # direct window sums; prefix-sum differences lose precision where power is ~0
    box = np.ones(nw)
    power = np.column_stack([np.convolve(ch**2, box, mode="valid") for ch in ts.data.T]) / nw
    return ts.with_data(np.sqrt(power))


def process_recording(
    raw: TimeSeries,
    filter_spec: FilterSpec = FilterSpec(),
    envelope_spec: EnvelopeSpec = EnvelopeSpec(),
) -> TimeSeries:
    x = zero_mean(raw)
    x = wavelet_denoise(x)
    x = butterworth_bandpass(x, filter_spec)
    x = rectify(x)
    return rms_envelope(x, envelope_spec)


# -- files -------------------------------------------------------------------


def read_recording_csv(path) -> tuple[TimeSeries, dict]:
    """Load ``sample,<channel>...`` CSV plus an optional ``<stem>.json`` manifest."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"recording not found: {p}")
    with p.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FormatError(f"{p}: empty file") from None
        if not header or header[0].strip() != "sample" or len(header) < 2:
            raise FormatError(f"{p}: expected header starting with 'sample', got {header}")
        try:
            rows = [[float(v) for v in row[1:]] for row in reader if row]
        except ValueError as exc:
            raise FormatError(f"{p}: non-numeric value ({exc})") from exc
    if not rows or any(len(r) != len(header) - 1 for r in rows):
        raise FormatError(f"{p}: ragged or empty data")

    manifest = {}
    side = p.with_suffix(".json")
    if side.is_file():
        manifest = json.loads(side.read_text())
    rate = float(manifest.get("sample_rate_hz", 1000.0))
    return TimeSeries(np.array(rows), rate), manifest


def write_recording_csv(path, ts: TimeSeries, channel_names=CHANNEL_NAMES, manifest: dict | None = None):
    names = list(channel_names) if len(channel_names) == ts.channels else [f"ch{i}" for i in range(ts.channels)]
    p = Path(path)
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample", *names])
        for i, row in enumerate(ts.data):
            w.writerow([i, *(repr(float(v)) for v in row)])
    if manifest is not None:
        p.with_suffix(".json").write_text(json.dumps({"sample_rate_hz": ts.sample_rate, **manifest}, indent=2))
