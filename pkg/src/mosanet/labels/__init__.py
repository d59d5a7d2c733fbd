"""Objective score labels and speech-enhancement evaluation metrics."""

from .envelope import EnvelopeSeries, envelope_band2, write_envelope_csv
from .kernels import BACKEND as KERNEL_BACKEND
from .labeling import gen_labels
from .metrics import (
    ScoreTriple,
    align_pair,
    csig,
    llr,
    sdi,
    ssnr,
    ssnri,
    stoi,
    wss,
)
from .pesq import PesqAdapterError, PesqCache, pesq_command, pesq_external

__all__ = [
    "EnvelopeSeries",
    "KERNEL_BACKEND",
    "PesqAdapterError",
    "PesqCache",
    "ScoreTriple",
    "align_pair",
    "csig",
    "envelope_band2",
    "gen_labels",
    "llr",
    "pesq_command",
    "pesq_external",
    "sdi",
    "ssnr",
    "ssnri",
    "stoi",
    "wss",
    "write_envelope_csv",
]
