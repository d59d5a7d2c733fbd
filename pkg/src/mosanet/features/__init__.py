"""Cross-domain acoustic feature streams: spectral, learnable filterbank, SSL."""

from .bundle import FeatureBundle, assemble_bundle, project_ssl
from .extract import STREAMS, FeatureConfig, FeatureExtractor, RawStreams
from .sinc import FilterbankParams, SincFilterbank, mel_band_edges, sinc_filterbank
from .spectral import (
    COMPLEX_RI,
    LPS,
    N_FFT,
    PS,
    SpectralFrames,
    istft,
    istft_complex,
    log_power_spec,
    lps_to_magnitude,
    power_spec,
    ri_features,
    spectral_features,
    stft,
)
from .ssl import (
    SslExtractor,
    SslProviderError,
    SslStubProvider,
    make_provider,
    read_cache,
    ssl_embed,
    write_cache,
)

__all__ = [
    "COMPLEX_RI",
    "FeatureBundle",
    "FeatureConfig",
    "FeatureExtractor",
    "FilterbankParams",
    "LPS",
    "N_FFT",
    "PS",
    "RawStreams",
    "STREAMS",
    "SincFilterbank",
    "SpectralFrames",
    "SslExtractor",
    "SslProviderError",
    "SslStubProvider",
    "assemble_bundle",
    "istft",
    "istft_complex",
    "log_power_spec",
    "lps_to_magnitude",
    "make_provider",
    "mel_band_edges",
    "power_spec",
    "project_ssl",
    "read_cache",
    "ri_features",
    "sinc_filterbank",
    "spectral_features",
    "ssl_embed",
    "stft",
    "write_cache",
]
