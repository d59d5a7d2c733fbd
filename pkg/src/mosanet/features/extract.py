"""Feature stream selection and per-utterance raw extraction.

``FeatureConfig`` names which streams feed the model (one spectral kind,
optionally the learnable filterbank and/or SSL embeddings). Extraction
here covers the static parts only; the learnable parts (sinc cutoffs,
SSL reduction) live inside the model so they can train.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..audio import Waveform
from ..configfile import check_declared, parse_config_file
from .spectral import COMPLEX_RI, PS, SpectralFrames, spectral_features
from .ssl import SslExtractor, make_provider

STREAMS = ("PS", "COMPLEX", "LFB", "SSL")

_FEATURE_FILE_KEYS = {
    "stft": {"kind"},
    "lfb": {"enabled", "filters", "kernel_ms"},
    "ssl": {"enabled", "provider", "dim", "cache_dir"},
}


@dataclass(frozen=True)
class FeatureConfig:
    streams: tuple[str, ...] = ("PS",)
    lfb_filters: int = 80
    lfb_kernel_ms: float = 251 / 16.0
    ssl_provider: str = "stub"
    ssl_dim: int = 8
    ssl_cache_dir: str | None = None

    def __post_init__(self):
        if not self.streams:
            raise ValueError("at least one feature stream is required")
        unknown = set(self.streams) - set(STREAMS)
        if unknown:
            raise ValueError(f"unknown streams {sorted(unknown)}; choose from {STREAMS}")
        if "PS" in self.streams and "COMPLEX" in self.streams:
            raise ValueError("PS and COMPLEX are alternative spectral kinds; pick one")

    @property
    def spectral_kind(self) -> str | None:
        if "PS" in self.streams:
            return PS
        if "COMPLEX" in self.streams:
            return COMPLEX_RI
        return None

    @classmethod
    def from_file(cls, path) -> "FeatureConfig":
        tree = parse_config_file(path)
        check_declared(tree, _FEATURE_FILE_KEYS)
        return cls.from_tree(tree)

    @classmethod
    def from_tree(cls, tree: dict) -> "FeatureConfig":
        stft_kind = tree.get("stft", {}).get("kind", "PS")
        lfb = tree.get("lfb", {})
        ssl = tree.get("ssl", {})
        streams: list[str] = []
        if stft_kind and stft_kind != "none":
            streams.append(str(stft_kind))
        if lfb.get("enabled", False):
            streams.append("LFB")
        if ssl.get("enabled", False):
            streams.append("SSL")
        return cls(
            streams=tuple(streams),
            lfb_filters=int(lfb.get("filters", 80)),
            lfb_kernel_ms=float(lfb.get("kernel_ms", 251 / 16.0)),
            ssl_provider=str(ssl.get("provider", "stub")),
            ssl_dim=int(ssl.get("dim", 8)),
            ssl_cache_dir=ssl.get("cache_dir") or None,
        )


@dataclass
class RawStreams:
    """Static per-utterance inputs handed to the model."""

    spectral: SpectralFrames | None = None
    samples: np.ndarray | None = None  # raw waveform for the filterbank
    ssl: np.ndarray | None = None      # provider embeddings, pre-reduction


class FeatureExtractor:
    def __init__(self, config: FeatureConfig):
        self.config = config
        self._ssl = None
        if "SSL" in config.streams:
            provider = make_provider(config.ssl_provider, dim=config.ssl_dim)
            self._ssl = SslExtractor(provider, config.ssl_cache_dir)

    def extract(self, wav: Waveform, utt_id: str) -> RawStreams:
        raw = RawStreams()
        kind = self.config.spectral_kind
        if kind is not None:
            raw.spectral = spectral_features(wav, kind)
        if "LFB" in self.config.streams:
            raw.samples = wav.samples
        if self._ssl is not None:
            raw.ssl = self._ssl.embed(utt_id, wav)
        return raw
