"""Self-supervised embedding providers and the on-disk embedding cache.

Backbones are consumed through a provider interface: anything with a
``name``, a ``dim``, and ``embed(waveform) -> frames x dim``. A
deterministic stub provider ships for tests and toy experiments, so the
core suite never needs pretrained models. Embeddings are cached per
utterance as little-endian binary matrices (16-byte header, float32 rows).
"""

from __future__ import annotations

import hashlib
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..audio import SAMPLE_RATE, Waveform

CACHE_MAGIC = b"MOSASSL1"
ENV_CACHE_DIR = "MOSANET_SSL_CACHE"


class SslProviderError(RuntimeError):
    pass


class SslStubProvider:
    """Seeded-hash embeddings: reproducible across runs and processes."""

    def __init__(self, dim: int = 8, stride_ms: float = 20.0, win_ms: float = 25.0):
        self.name = f"stub{dim}"
        self.dim = dim
        self.stride = int(round(stride_ms * SAMPLE_RATE / 1000.0))
        self.win = int(round(win_ms * SAMPLE_RATE / 1000.0))

    def embed(self, wav: Waveform) -> np.ndarray:
        n = len(wav)
        frames = max(1, 1 + (n - self.win) // self.stride)
        digest = hashlib.blake2b(wav.samples.tobytes() + self.name.encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return rng.standard_normal((frames, self.dim)).astype(np.float32)


PROVIDERS = {"stub": SslStubProvider}


def make_provider(name: str, **kwargs) -> SslStubProvider:
    if name not in PROVIDERS:
        raise SslProviderError(
            f"unknown ssl provider {name!r}; registered: {sorted(PROVIDERS)}"
        )
    return PROVIDERS[name](**kwargs)


def write_cache(path: str | Path, matrix: np.ndarray) -> Path:
    """Atomic write (temp file + rename) of a frames x dim float32 matrix."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix = np.ascontiguousarray(matrix, dtype=np.float32)
    frames, dim = matrix.shape
    header = CACHE_MAGIC + struct.pack("<II", frames, dim)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(matrix.tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


def read_cache(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:8] != CACHE_MAGIC:
            raise SslProviderError(f"{path}: not an embedding cache file")
        frames, dim = struct.unpack("<II", header[8:])
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != frames * dim:
        raise SslProviderError(f"{path}: truncated embedding cache")
    return data.reshape(frames, dim).copy()


def default_cache_dir() -> Path | None:
    env = os.environ.get(ENV_CACHE_DIR)
    return Path(env) if env else None


def ssl_embed(
    wav: Waveform | None = None,
    cache_path: str | Path | None = None,
    provider=None,
) -> np.ndarray:
    """Embeddings from the cache when present, else from the provider.

    Freshly computed embeddings are written back when ``cache_path`` is
    given. With neither a readable cache nor a provider this is an error.
    """
    if cache_path is not None and Path(cache_path).exists():
        return read_cache(cache_path)
    if provider is None or wav is None:
        raise SslProviderError(
            "ssl provider unavailable: no cache hit and no provider configured"
        )
    matrix = provider.embed(wav)
    if cache_path is not None:
        write_cache(cache_path, matrix)
    return matrix


class SslExtractor:
    """Keys the cache by utterance id and provider name under one directory."""

    def __init__(self, provider=None, cache_dir: str | Path | None = None):
        self.provider = provider
        if cache_dir is None:
            cache_dir = default_cache_dir()
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None

    def cache_path(self, utt_id: str) -> Path | None:
        if self.cache_dir is None or self.provider is None:
            return None
        return self.cache_dir / self.provider.name / f"{utt_id}.emb"

    def embed(self, utt_id: str, wav: Waveform | None = None) -> np.ndarray:
        return ssl_embed(wav, self.cache_path(utt_id), self.provider)
