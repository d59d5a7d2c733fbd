"""Intrusive objective metrics used as training targets and SE scores.

STOI follows the canonical short-time one-third-octave definition
(15 bands from 150 Hz, 384 ms segments, -15 dB SDR clipping bound) at a
10 kHz internal rate. SDI is utterance-level normalized squared error.
SSNR/LLR/WSS/CSIG follow the conventional composite-measure definitions;
their per-frame loops live in ``kernels`` (compiled when available).
All functions are deterministic: same inputs, bit-identical outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import resample_poly

from ..audio import Waveform
from . import kernels

# STOI internals
_STOI_FS = 10000
_STOI_FRAME = 256
_STOI_HOP = 128
_STOI_NFFT = 512
_STOI_BANDS = 15
_STOI_FIRST_CF = 150.0
_STOI_SEG = 30  # frames per segment: 384 ms at 10 kHz
_STOI_DYN_RANGE = 40.0
_STOI_SDR_BOUND = -15.0

# SSNR defaults (conventional composite-measure values)
SSNR_FRAME_MS = 32.0
SSNR_HOP_MS = 16.0
SSNR_CLAMP = (-10.0, 35.0)

# LLR / WSS framing
_LPC_ORDER = 16
_LW_FRAME_MS = 30.0
_TRIM_FRACTION = 0.95
_WSS_KMAX = 20.0
_WSS_KLOCMAX = 1.0


@dataclass(frozen=True)
class ScoreTriple:
    """Utterance-level ground-truth scores for the three assessment tasks."""

    pesq: float
    stoi: float
    sdi: float

    def __post_init__(self):
        if not all(np.isfinite([self.pesq, self.stoi, self.sdi])):
            raise ValueError("scores must be finite")
        if not -0.2 <= self.stoi <= 1.0:
            raise ValueError(f"stoi {self.stoi} outside [-0.2, 1]")
        if self.sdi < 0.0:
            raise ValueError(f"sdi {self.sdi} must be >= 0")


def align_pair(a: Waveform, b: Waveform, max_slack: int = 512) -> tuple[Waveform, Waveform]:
    """Trim trailing samples so both signals share the shorter length.

    Intended for processed signals that lost less than one analysis window
    (e.g. ISTFT tail truncation); larger mismatches are rejected.
    """
    if len(a) == len(b):
        return a, b
    if abs(len(a) - len(b)) > max_slack:
        raise ValueError(f"length mismatch too large: {len(a)} vs {len(b)}")
    n = min(len(a), len(b))
    return Waveform(a.samples[:n]), Waveform(b.samples[:n])


def _hann_interior(n: int) -> np.ndarray:
    # Hann of length n without the zero endpoints (periodic-equivalent framing)
    return np.hanning(n + 2)[1:-1]


def _third_octave_matrix() -> np.ndarray:
    freqs = np.linspace(0, _STOI_FS, _STOI_NFFT + 1)[: _STOI_NFFT // 2 + 1]
    k = np.arange(_STOI_BANDS)
    cf = _STOI_FIRST_CF * 2.0 ** (k / 3.0)
    fl = np.sqrt(cf * _STOI_FIRST_CF * 2.0 ** ((k - 1) / 3.0))
    fr = np.sqrt(cf * _STOI_FIRST_CF * 2.0 ** ((k + 1) / 3.0))
    h = np.zeros((_STOI_BANDS, freqs.size))
    for i in range(_STOI_BANDS):
        lo = int(np.argmin((freqs - fl[i]) ** 2))
        hi = int(np.argmin((freqs - fr[i]) ** 2))
        h[i, lo:hi] = 1.0
    return h


def _frame_signal(x: np.ndarray, frame_len: int, hop: int, drop_last: bool) -> np.ndarray:
    n_frames = (x.size - frame_len) // hop + (0 if drop_last else 1)
    if n_frames <= 0:
        return np.empty((0, frame_len))
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def _remove_silent_frames(
    x: np.ndarray, y: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Drop frames more than 40 dB below the loudest clean frame; overlap-add the rest."""
    w = _hann_interior(_STOI_FRAME)
    frames_x = _frame_signal(x, _STOI_FRAME, _STOI_HOP, drop_last=True) * w
    frames_y = _frame_signal(y, _STOI_FRAME, _STOI_HOP, drop_last=True) * w
    if frames_x.shape[0] == 0:
        return np.empty(0), np.empty(0)
    energy = np.linalg.norm(frames_x, axis=1) / np.sqrt(_STOI_FRAME)
    with np.errstate(divide="ignore"):
        level_db = 20.0 * np.log10(np.maximum(energy, 1e-300))
    keep = level_db - level_db.max() + _STOI_DYN_RANGE > 0
    kept_x = frames_x[keep]
    kept_y = frames_y[keep]
    n_kept = kept_x.shape[0]
    if n_kept == 0:
        return np.empty(0), np.empty(0)
    out_len = (n_kept - 1) * _STOI_HOP + _STOI_FRAME
    x_out = np.zeros(out_len)
    y_out = np.zeros(out_len)
    for j in range(n_kept):
        start = j * _STOI_HOP
        x_out[start : start + _STOI_FRAME] += kept_x[j]
        y_out[start : start + _STOI_FRAME] += kept_y[j]
    return x_out, y_out


def _band_envelopes(x: np.ndarray, h: np.ndarray) -> np.ndarray:
    frames = _frame_signal(x, _STOI_FRAME, _STOI_HOP, drop_last=True)
    frames = frames * _hann_interior(_STOI_FRAME)
    spec = np.fft.rfft(frames, n=_STOI_NFFT, axis=1)
    return np.sqrt(h @ (np.abs(spec) ** 2).T)  # (bands, frames)


def stoi(clean: Waveform, degraded: Waveform) -> float:
    """Short-time objective intelligibility of ``degraded`` against ``clean``."""
    clean, degraded = align_pair(clean, degraded)
    if clean.duration_s < 0.384:
        raise ValueError("minimum duration for stoi is 384 ms")
    x = resample_poly(clean.samples, _STOI_FS, clean.sample_rate)
    y = resample_poly(degraded.samples, _STOI_FS, degraded.sample_rate)
    x, y = _remove_silent_frames(x, y)
    h = _third_octave_matrix()
    xb = _band_envelopes(x, h)
    yb = _band_envelopes(y, h)
    n_frames = xb.shape[1]
    if n_frames < _STOI_SEG:
        raise ValueError("minimum duration for stoi is 384 ms of active speech")
    clip = 10.0 ** (-_STOI_SDR_BOUND / 20.0)
    # all length-30 segments: (segments, bands, 30)
    xs = np.lib.stride_tricks.sliding_window_view(xb, _STOI_SEG, axis=1)
    ys = np.lib.stride_tricks.sliding_window_view(yb, _STOI_SEG, axis=1)
    xs = np.transpose(xs, (1, 0, 2))
    ys = np.transpose(ys, (1, 0, 2))
    x_energy = np.sum(xs**2, axis=2, keepdims=True)
    y_energy = np.sum(ys**2, axis=2, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.sqrt(np.where(y_energy > 0, x_energy / np.maximum(y_energy, 1e-300), 0.0))
    y_clipped = np.minimum(alpha * ys, xs * (1.0 + clip))
    xc = xs - xs.mean(axis=2, keepdims=True)
    yc = y_clipped - y_clipped.mean(axis=2, keepdims=True)
    num = np.sum(xc * yc, axis=2)
    den = np.linalg.norm(xc, axis=2) * np.linalg.norm(yc, axis=2)
    corr = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return float(corr.mean())


def sdi(clean: Waveform, processed: Waveform) -> float:
    """Speech distortion index: sum (clean - processed)^2 / sum clean^2."""
    if len(clean) != len(processed):
        raise ValueError("sdi needs equal-length signals")
    denom = float(np.sum(clean.samples**2))
    if denom == 0.0:
        raise ValueError("clean signal has zero power")
    return float(np.sum((clean.samples - processed.samples) ** 2) / denom)


def ssnr(
    clean: Waveform,
    processed: Waveform,
    frame_ms: float = SSNR_FRAME_MS,
    clamp: tuple[float, float] = SSNR_CLAMP,
    hop_ms: float = SSNR_HOP_MS,
) -> float:
    """Segmental SNR in dB: frame-wise clamped log energy ratio, averaged."""
    if len(clean) != len(processed):
        raise ValueError("ssnr needs equal-length signals")
    frame_len = int(round(frame_ms * clean.sample_rate / 1000.0))
    hop = int(round(hop_ms * clean.sample_rate / 1000.0))
    vals = kernels.ssnr_frame_values(
        clean.samples, processed.samples, frame_len, hop, clamp[0], clamp[1]
    )
    if vals.size == 0:
        raise ValueError("signal shorter than one ssnr frame")
    return float(np.mean(vals))


def ssnri(clean: Waveform, noisy: Waveform, enhanced: Waveform) -> float:
    """Segmental SNR improvement of enhanced over noisy, both against clean."""
    return ssnr(clean, enhanced) - ssnr(clean, noisy)


def _lw_frames(x: np.ndarray, sample_rate: int) -> np.ndarray:
    frame_len = int(round(_LW_FRAME_MS * sample_rate / 1000.0))
    hop = frame_len // 4
    frames = _frame_signal(x, frame_len, hop, drop_last=True)
    return frames * _hann_interior(frame_len)


def llr(clean: Waveform, processed: Waveform) -> float:
    """Frame-averaged LPC log-likelihood ratio (smallest 95% of frames)."""
    if len(clean) != len(processed):
        raise ValueError("llr needs equal-length signals")
    cf = _lw_frames(clean.samples, clean.sample_rate)
    pf = _lw_frames(processed.samples, processed.sample_rate)
    if cf.shape[0] == 0:
        raise ValueError("signal shorter than one llr frame")
    values, _skipped = kernels.llr_frame_values(cf, pf, _LPC_ORDER)
    if values.size == 0:
        raise ValueError("all llr frames unstable")
    values = np.sort(values)
    keep = max(1, int(round(_TRIM_FRACTION * values.size)))
    return float(np.mean(values[:keep]))


def _critical_band_filters(sample_rate: int, n_fft: int) -> np.ndarray:
    # 25 Gaussian critical-band filters; -30 dB skirts zeroed
    cent_freq = np.array(
        [50.0, 120.0, 190.0, 260.0, 330.0, 400.0, 470.0, 540.0, 617.372,
         703.378, 798.717, 904.128, 1020.38, 1148.30, 1288.72, 1442.54,
         1610.70, 1794.16, 1993.93, 2211.08, 2446.71, 2701.97, 2978.04,
         3276.17, 3597.63]
    )
    bandwidth = np.array(
        [70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 70.0, 77.3724, 86.0056,
         95.3398, 105.411, 116.256, 127.914, 140.423, 153.823, 168.154,
         183.457, 199.776, 217.153, 235.631, 255.255, 276.072, 298.126,
         321.465, 346.136]
    )
    half = n_fft // 2
    max_freq = sample_rate / 2.0
    min_factor = np.exp(-30.0 / (2.0 * 2.303))
    j = np.arange(half)
    filters = np.zeros((cent_freq.size, half))
    for i in range(cent_freq.size):
        f0 = (cent_freq[i] / max_freq) * half
        bw = (bandwidth[i] / max_freq) * half
        norm = np.log(bandwidth[0]) - np.log(bandwidth[i])
        shape = np.exp(-11.0 * ((j - np.floor(f0)) / bw) ** 2 + norm)
        filters[i] = np.where(shape > min_factor, shape, 0.0)
    return filters


def wss(clean: Waveform, processed: Waveform) -> float:
    """Weighted spectral-slope distance (smallest 95% of frames)."""
    if len(clean) != len(processed):
        raise ValueError("wss needs equal-length signals")
    cf = _lw_frames(clean.samples, clean.sample_rate)
    pf = _lw_frames(processed.samples, processed.sample_rate)
    if cf.shape[0] == 0:
        raise ValueError("signal shorter than one wss frame")
    frame_len = cf.shape[1]
    n_fft = int(2 ** np.ceil(np.log2(2 * frame_len)))
    filters = _critical_band_filters(clean.sample_rate, n_fft)
    c_spec = np.abs(np.fft.rfft(cf, n=n_fft, axis=1)[:, : n_fft // 2]) ** 2
    p_spec = np.abs(np.fft.rfft(pf, n=n_fft, axis=1)[:, : n_fft // 2]) ** 2
    c_db = 10.0 * np.log10(np.maximum(c_spec @ filters.T, 1e-10))
    p_db = 10.0 * np.log10(np.maximum(p_spec @ filters.T, 1e-10))
    values = kernels.wss_frame_distances(
        np.ascontiguousarray(c_db), np.ascontiguousarray(p_db), _WSS_KMAX, _WSS_KLOCMAX
    )
    values = np.sort(values)
    keep = max(1, int(round(_TRIM_FRACTION * values.size)))
    return float(np.mean(values[:keep]))


def csig(llr_value: float, pesq_value: float, wss_value: float) -> float:
    """Composite signal-distortion rating on [1, 5] from LLR, PESQ, and WSS."""
    if not all(np.isfinite([llr_value, pesq_value, wss_value])):
        raise ValueError("csig inputs must be finite")
    raw = 3.093 - 1.029 * llr_value + 0.603 * pesq_value - 0.009 * wss_value
    return float(np.clip(raw, 1.0, 5.0))
