"""Waveform container, 16 kHz PCM WAV I/O, and SNR-controlled noise mixing.

All audio in this package is mono 16 kHz float64 in [-1, 1]. Inputs that do
not match are rejected with a diagnostic instead of being silently resampled
or downmixed, so the metric semantics stay exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

SAMPLE_RATE = 16000


class AudioFormatError(ValueError):
    """Input audio violates the mono/16 kHz/linear-PCM contract."""


@dataclass(frozen=True)
class Waveform:
    """Mono speech signal at 16 kHz, amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise AudioFormatError("waveform must be a non-empty 1-D sample sequence")
        if not np.all(np.isfinite(samples)):
            raise AudioFormatError("waveform contains non-finite samples")
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(
                f"sample rate must be {SAMPLE_RATE} Hz, got {self.sample_rate}"
            )
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def power(self) -> float:
        """Mean squared amplitude over the full utterance (no VAD weighting)."""
        return float(np.mean(self.samples**2))


def load_waveform(path: str | Path) -> Waveform:
    """Read a mono 16 kHz 16-bit linear PCM WAV file, scaled to [-1, 1].

    Rejects any other sample rate, channel count, or sample format; this
    package never resamples.
    """
    path = Path(path)
    rate, data = wavfile.read(path)
    if rate != SAMPLE_RATE:
        raise AudioFormatError(
            f"{path}: wrong sample rate {rate} Hz (need {SAMPLE_RATE} Hz, no resampling)"
        )
    if data.ndim != 1:
        raise AudioFormatError(
            f"{path}: wrong channel count {data.shape[1]} (need mono)"
        )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(np.float64) / 2147483648.0
    else:
        raise AudioFormatError(f"{path}: not integer linear PCM (dtype {data.dtype})")
    return Waveform(samples)


def save_waveform(wav: Waveform, path: str | Path) -> Path:
    """Write 16-bit PCM WAV; peaks beyond full scale are clipped."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(wav.samples, -1.0, 32767.0 / 32768.0)
    wavfile.write(path, wav.sample_rate, (clipped * 32768.0).round().astype(np.int16))
    return path


def noise_gain(clean_power: float, noise_power: float, snr_db: float) -> float:
    """Gain g with 10*log10(P_clean / (g^2 * P_noise)) == snr_db."""
    return float(np.sqrt(clean_power / (noise_power * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(
    clean: Waveform,
    noise: Waveform,
    snr_db: float,
    rng: np.random.Generator | int | None = 0,
) -> Waveform:
    """Add a seeded random crop of ``noise`` to ``clean`` at an exact SNR.

    The noise must be at least as long as the clean signal; a contiguous
    crop of matching length is drawn from ``rng``. Power is the mean squared
    amplitude over the whole signal.
    """
    if len(noise) < len(clean):
        raise ValueError(
            f"noise ({len(noise)} samples) shorter than clean ({len(clean)} samples)"
        )
    p_clean = clean.power()
    if p_clean == 0.0:
        raise ValueError("clean signal has zero power")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    start = int(rng.integers(0, len(noise) - len(clean) + 1))
    crop = noise.samples[start : start + len(clean)]
    p_noise = float(np.mean(crop**2))
    if p_noise == 0.0:
        raise ValueError("degenerate noise: zero-power crop")
    g = noise_gain(p_clean, p_noise, snr_db)
    return Waveform(clean.samples + g * crop)


def measured_snr_db(clean: Waveform, degraded: Waveform) -> float:
    """SNR in dB of ``degraded`` against ``clean``, treating the difference as noise."""
    residual = degraded.samples - clean.samples
    p_res = float(np.mean(residual**2))
    if p_res == 0.0:
        raise ValueError("degraded equals clean; SNR undefined")
    return 10.0 * float(np.log10(clean.power() / p_res))
