"""Tone-vocoder style amplitude-envelope extraction for the 457-1202 Hz band.

Band-pass (4th-order Butterworth), full-wave rectify, low-pass at 50 Hz
(4th-order Butterworth), then decimate to a 100 Hz envelope rate. Used for
qualitative comparison of clean/noisy/enhanced utterances.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import butter, lfilter

from ..audio import Waveform

BAND_HZ = (457.0, 1202.0)
LOWPASS_HZ = 50.0
ENVELOPE_RATE_HZ = 100


@dataclass(frozen=True)
class EnvelopeSeries:
    values: np.ndarray
    frame_rate: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(values)):
            raise ValueError("envelope contains non-finite values")
        if np.any(values < 0):
            raise ValueError("envelope values must be non-negative")
        object.__setattr__(self, "values", values)


def envelope_band2(wav: Waveform) -> EnvelopeSeries:
    """Amplitude envelope of the second vocoder channel (457-1202 Hz)."""
    if wav.duration_s < 0.1:
        raise ValueError("minimum duration for envelope analysis is 100 ms")
    nyq = wav.sample_rate / 2.0
    b_bp, a_bp = butter(4, [BAND_HZ[0] / nyq, BAND_HZ[1] / nyq], btype="band")
    band = lfilter(b_bp, a_bp, wav.samples)
    rectified = np.abs(band)
    b_lp, a_lp = butter(4, LOWPASS_HZ / nyq, btype="low")
    smooth = lfilter(b_lp, a_lp, rectified)
    step = wav.sample_rate // ENVELOPE_RATE_HZ
    # low-pass ringing can dip slightly below zero; envelopes are non-negative
    values = np.maximum(smooth[::step], 0.0)
    return EnvelopeSeries(values=values, frame_rate=float(ENVELOPE_RATE_HZ))


def write_envelope_csv(env: EnvelopeSeries, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time_s", "value"])
        for i, v in enumerate(env.values):
            writer.writerow([f"{i / env.frame_rate:.6f}", f"{v:.8g}"])
    return path
