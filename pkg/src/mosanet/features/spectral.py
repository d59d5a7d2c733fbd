"""STFT analysis/synthesis and the spectral feature kinds (PS, LPS, RI).

Analysis: 512-point FFT, 32 ms periodic Hamming window, 16 ms hop, no
padding (frame count 1 + floor((N - win) / hop)). Synthesis is weighted
overlap-add normalized by the summed squared window, which reconstructs
every covered sample exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

from ..audio import SAMPLE_RATE, Waveform

N_FFT = 512
WIN_MS = 32.0
HOP_MS = 16.0
LOG_FLOOR = 1e-12

PS = "PS"
LPS = "LPS"
COMPLEX_RI = "COMPLEX_RI"
SPECTRAL_KINDS = (PS, LPS, COMPLEX_RI)


@dataclass(frozen=True)
class SpectralFrames:
    """Frames-by-bins real feature matrix with its spectral kind tag."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ValueError("spectral features must be a non-empty frames x bins matrix")
        if self.kind not in SPECTRAL_KINDS:
            raise ValueError(f"unknown spectral kind {self.kind!r}")
        if self.kind == PS and np.any(values < 0):
            raise ValueError("power spectrum values must be non-negative")
        if self.kind == COMPLEX_RI and values.shape[1] != 2 * (N_FFT // 2 + 1):
            raise ValueError("RI features must stack real and imaginary bins")
        object.__setattr__(self, "values", values)

    @property
    def frame_count(self) -> int:
        return self.values.shape[0]

    @property
    def bin_count(self) -> int:
        return self.values.shape[1]


def _window(win_len: int) -> np.ndarray:
    return get_window("hamming", win_len, fftbins=True)


def _frame_geometry(sample_rate: int = SAMPLE_RATE) -> tuple[int, int]:
    return (
        int(round(WIN_MS * sample_rate / 1000.0)),
        int(round(HOP_MS * sample_rate / 1000.0)),
    )


def frame_count(n_samples: int, sample_rate: int = SAMPLE_RATE) -> int:
    win, hop = _frame_geometry(sample_rate)
    return 1 + (n_samples - win) // hop if n_samples >= win else 0


def stft(wav: Waveform) -> np.ndarray:
    """Complex frames x 257 analysis of a waveform."""
    win, hop = _frame_geometry(wav.sample_rate)
    n = len(wav)
    if n < win:
        raise ValueError(f"waveform shorter than one {WIN_MS:g} ms analysis window")
    n_frames = 1 + (n - win) // hop
    idx = np.arange(win)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = wav.samples[idx] * _window(win)
    return np.fft.rfft(frames, n=N_FFT, axis=1)


def istft(magnitude: np.ndarray, phase: np.ndarray) -> Waveform:
    """Weighted overlap-add synthesis from magnitude and phase frames."""
    magnitude = np.asarray(magnitude, dtype=np.float64)
    phase = np.asarray(phase, dtype=np.float64)
    if magnitude.shape != phase.shape:
        raise ValueError(
            f"magnitude {magnitude.shape} and phase {phase.shape} shapes differ"
        )
    return istft_complex(magnitude * np.exp(1j * phase))


def istft_complex(frames: np.ndarray) -> Waveform:
    if frames.ndim != 2 or frames.shape[1] != N_FFT // 2 + 1:
        raise ValueError(f"expected frames x {N_FFT // 2 + 1} complex matrix")
    win, hop = _frame_geometry()
    w = _window(win)
    n_frames = frames.shape[0]
    out_len = (n_frames - 1) * hop + win
    acc = np.zeros(out_len)
    norm = np.zeros(out_len)
    chunks = np.fft.irfft(frames, n=N_FFT, axis=1)[:, :win]
    for i in range(n_frames):
        start = i * hop
        acc[start : start + win] += w * chunks[i]
        norm[start : start + win] += w * w
    return Waveform(acc / norm)


def power_spec(complex_frames: np.ndarray) -> SpectralFrames:
    return SpectralFrames(np.abs(complex_frames) ** 2, kind=PS)


def log_power_spec(complex_frames: np.ndarray) -> SpectralFrames:
    return SpectralFrames(np.log(np.abs(complex_frames) ** 2 + LOG_FLOOR), kind=LPS)


def ri_features(complex_frames: np.ndarray) -> SpectralFrames:
    stacked = np.concatenate([complex_frames.real, complex_frames.imag], axis=1)
    return SpectralFrames(stacked, kind=COMPLEX_RI)


def lps_to_magnitude(lps_values: np.ndarray) -> np.ndarray:
    # inverse of log(|X|^2 + eps); the eps floor shifts values by < 1e-9
    return np.exp(np.asarray(lps_values, dtype=np.float64) / 2.0)


def spectral_features(wav: Waveform, kind: str) -> SpectralFrames:
    frames = stft(wav)
    if kind == PS:
        return power_spec(frames)
    if kind == LPS:
        return log_power_spec(frames)
    if kind == COMPLEX_RI:
        return ri_features(frames)
    raise ValueError(f"unknown spectral kind {kind!r}")
