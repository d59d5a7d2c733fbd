"""Learnable band-pass sinc filterbank over raw waveforms (LFB stream).

Each channel is a windowed-sinc band-pass with learnable low/high cutoffs,
initialized on the mel scale. The rectified, log-compressed filter output
is mean-pooled over the STFT frame grid so the LFB frame count tracks the
spectral frame count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from ..audio import SAMPLE_RATE, Waveform
from .spectral import LOG_FLOOR, _frame_geometry

MIN_LOW_HZ = 30.0
MIN_BAND_HZ = 30.0
DEFAULT_FILTERS = 80
DEFAULT_KERNEL_MS = 251 / 16.0  # 251 taps at 16 kHz


def _mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_inv(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_band_edges(n_filters: int, low_hz: float = MIN_LOW_HZ,
                   high_hz: float = SAMPLE_RATE / 2 - 100.0) -> np.ndarray:
    """n_filters+1 contiguous band edges, mel-spaced."""
    return _mel_inv(np.linspace(_mel(low_hz), _mel(high_hz), n_filters + 1))


@dataclass
class FilterbankParams:
    """Cutoff state of the learnable filterbank (all frequencies in Hz)."""

    band_low_hz: np.ndarray
    band_high_hz: np.ndarray
    kernel_ms: float = DEFAULT_KERNEL_MS
    hop_ms: float = 16.0

    def __post_init__(self):
        self.band_low_hz = np.asarray(self.band_low_hz, dtype=np.float64)
        self.band_high_hz = np.asarray(self.band_high_hz, dtype=np.float64)
        if self.band_low_hz.shape != self.band_high_hz.shape:
            raise ValueError("low/high cutoff arrays must align")
        nyquist = SAMPLE_RATE / 2
        if np.any(self.band_low_hz <= 0) or np.any(self.band_high_hz >= nyquist):
            raise ValueError("cutoffs must satisfy 0 < low < high < Nyquist")
        if np.any(self.band_low_hz >= self.band_high_hz):
            raise ValueError("cutoffs must satisfy 0 < low < high < Nyquist")

    @property
    def filter_count(self) -> int:
        return self.band_low_hz.size

    @classmethod
    def mel_initialized(cls, n_filters: int = DEFAULT_FILTERS) -> "FilterbankParams":
        edges = mel_band_edges(n_filters)
        return cls(band_low_hz=edges[:-1], band_high_hz=edges[1:])


class SincFilterbank(nn.Module):
    """Parameterized sinc band-pass convolution, rectify, log, frame-pool."""

    def __init__(self, params: FilterbankParams | None = None,
                 n_filters: int = DEFAULT_FILTERS):
        super().__init__()
        if params is None:
            params = FilterbankParams.mel_initialized(n_filters)
        taps = int(round(params.kernel_ms * SAMPLE_RATE / 1000.0))
        if taps % 2 == 0:
            taps += 1
        self.taps = taps
        self.n_filters = params.filter_count
        dtype = torch.get_default_dtype()
        self.low_hz = nn.Parameter(torch.as_tensor(params.band_low_hz, dtype=dtype))
        self.high_hz = nn.Parameter(torch.as_tensor(params.band_high_hz, dtype=dtype))
        # time axis in seconds, symmetric around the center tap
        n = torch.arange(taps, dtype=self.low_hz.dtype) - (taps - 1) / 2
        self.register_buffer("_t", n / SAMPLE_RATE)
        self.register_buffer(
            "_window", torch.hamming_window(taps, periodic=False, dtype=self.low_hz.dtype)
        )
        win, hop = _frame_geometry()
        self._frame = (win, hop)

    def kernels(self) -> torch.Tensor:
        """(filters, taps) windowed-sinc band-pass impulse responses."""
        low = self.low_hz.unsqueeze(1)
        high = self.high_hz.unsqueeze(1)
        t = self._t.unsqueeze(0)
        band = 2 * high * torch.sinc(2 * high * t) - 2 * low * torch.sinc(2 * low * t)
        return band * self._window


    def forward(self, samples: torch.Tensor) -> torch.Tensor:
        """(n_samples,) -> (frames, filters); frame grid matches the STFT."""
        win, hop = self._frame
        if samples.numel() < win:
            raise ValueError("waveform shorter than one analysis frame")
        kernels = self.kernels().unsqueeze(1)  # (F, 1, taps)
        x = samples.reshape(1, 1, -1).to(kernels.dtype)
        filtered = nn.functional.conv1d(x, kernels, padding=self.taps // 2)[0]
        compressed = torch.log(filtered.abs() + LOG_FLOOR)
        pooled = compressed.unfold(dimension=1, size=win, step=hop).mean(dim=-1)
        return pooled.T  # (frames, filters)

    @torch.no_grad()
    def project_valid_bands_(self) -> None:
        """Clamp cutoffs back to 0 < low < high < Nyquist after an update."""
        nyquist = SAMPLE_RATE / 2
        self.high_hz.clamp_(MIN_LOW_HZ + MIN_BAND_HZ, nyquist - MIN_BAND_HZ)
        self.low_hz.data = torch.minimum(
            self.low_hz.data.clamp(min=MIN_LOW_HZ), self.high_hz.data - MIN_BAND_HZ
        )

    def params(self) -> FilterbankParams:
        return FilterbankParams(
            band_low_hz=self.low_hz.detach().cpu().numpy().copy(),
            band_high_hz=self.high_hz.detach().cpu().numpy().copy(),
        )


def sinc_filterbank(wav: Waveform, params: FilterbankParams) -> np.ndarray:
    """Functional front-end: filter a waveform with fixed cutoffs."""
    module = SincFilterbank(params).double()
    module.eval()
    with torch.no_grad():
        out = module(torch.as_tensor(wav.samples, dtype=torch.float64))
    return out.numpy()
