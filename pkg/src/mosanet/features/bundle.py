"""Cross-domain feature bundle: per-stream frames plus their total count.

The three streams (spectral, learnable filterbank, reduced SSL) are later
time-concatenated by the assessment model, so the utterance's total frame
count is the sum of the per-stream counts. Arrays may be numpy or torch;
the learnable streams stay in the autograd graph during training.
"""

from __future__ import annotations

from dataclasses import dataclass

from .spectral import SpectralFrames


def _rows(x) -> int:
    return int(x.shape[0])


@dataclass
class FeatureBundle:
    spectral: SpectralFrames | None = None
    lfb: object | None = None
    ssl: object | None = None

    @property
    def frame_counts(self) -> dict[str, int]:
        counts = {}
        if self.spectral is not None:
            counts["spectral"] = self.spectral.frame_count
        if self.lfb is not None:
            counts["lfb"] = _rows(self.lfb)
        if self.ssl is not None:
            counts["ssl"] = _rows(self.ssl)
        return counts

    @property
    def total_frames(self) -> int:
        return sum(self.frame_counts.values())


def assemble_bundle(
    spectral: SpectralFrames | None = None,
    lfb=None,
    ssl=None,
    d_common: int | None = None,
) -> FeatureBundle:
    """Validate stream shapes and record per-stream frame counts."""
    if spectral is None and lfb is None and ssl is None:
        raise ValueError("bundle needs at least one feature stream")
    if ssl is not None and d_common is not None and int(ssl.shape[1]) != d_common:
        raise ValueError(
            f"dimension mismatch: ssl stream is {int(ssl.shape[1])}-dim, expected {d_common}"
        )
    return FeatureBundle(spectral=spectral, lfb=lfb, ssl=ssl)


def project_ssl(ssl, weight, bias=None):
    """Affine reduction of SSL embeddings to the common feature dimension.

    ``weight`` is (d_common, d_ssl) with d_ssl >= d_common; works on numpy
    arrays and torch tensors alike.
    """
    d_common, d_ssl = int(weight.shape[0]), int(weight.shape[1])
    if d_ssl < d_common:
        raise ValueError(f"reduction must not widen: {d_ssl} -> {d_common}")
    if int(ssl.shape[1]) != d_ssl:
        raise ValueError(f"ssl dim {int(ssl.shape[1])} does not match map ({d_ssl})")
    out = ssl @ weight.T
    if bias is not None:
        out = out + bias
    return out
