"""Corpus construction: degraded-utterance generation and manifest handling.

A manifest is a JSONL file, one entry per line, pairing every clean,
noisy, and enhanced utterance with its noise metadata, split tag, and
(once labeled) score map. Noise crops and (noise, SNR) draws come from a
single seeded generator, so a corpus is reproducible from its seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .audio import Waveform, load_waveform, mix_at_snr, save_waveform

KINDS = ("clean", "noisy", "enhanced")
SPLITS = ("train", "test_seen", "test_unseen")

# Inclusive validation ranges per score key (None = unbounded).
# STOI's lower bound admits the clipped-correlation tolerance band.
_SCORE_RANGES = {
    "pesq": (-1.0, 5.0),
    "stoi": (-0.2, 1.0),
    "sdi": (0.0, None),
    "mos": (1.0, 5.0),
    "intel": (0.0, 1.0),
}

ScoreValue = float | list[float]


def _check_score(key: str, value: ScoreValue) -> None:
    if key not in _SCORE_RANGES:
        raise ValueError(f"unknown score key {key!r}")
    lo, hi = _SCORE_RANGES[key]
    ratings = value if isinstance(value, list) else [value]
    for v in ratings:
        if not np.isfinite(v):
            raise ValueError(f"score {key} is not finite: {v}")
        if lo is not None and v < lo or hi is not None and v > hi:
            raise ValueError(f"score {key}={v} outside [{lo}, {hi}]")


def score_value(entry: "ManifestEntry", key: str) -> float | None:
    """Scalar score for ``key``; per-rater lists are averaged."""
    if entry.scores is None or key not in entry.scores:
        return None
    v = entry.scores[key]
    return float(np.mean(v)) if isinstance(v, list) else float(v)


@dataclass
class ManifestEntry:
    utt_id: str
    clean_path: str
    degraded_path: str
    kind: str
    noise_type: str | None = None
    snr_db: float | None = None
    split: str = "train"
    scores: dict[str, ScoreValue] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"{self.utt_id}: unknown kind {self.kind!r}")
        if self.split not in SPLITS:
            raise ValueError(f"{self.utt_id}: unknown split {self.split!r}")
        if self.kind == "clean":
            if self.degraded_path != self.clean_path:
                raise ValueError(f"{self.utt_id}: clean entry must point at itself")
            if self.snr_db is not None:
                raise ValueError(f"{self.utt_id}: clean entry cannot carry an SNR")
        if self.kind == "noisy" and (self.noise_type is None or self.snr_db is None):
            raise ValueError(f"{self.utt_id}: noisy entry needs noise_type and snr_db")
        if self.scores is not None:
            for key, value in self.scores.items():
                _check_score(key, value)

    def to_json(self) -> str:
        return json.dumps(
            {
                "utt_id": self.utt_id,
                "clean_path": self.clean_path,
                "degraded_path": self.degraded_path,
                "kind": self.kind,
                "noise_type": self.noise_type,
                "snr_db": self.snr_db,
                "split": self.split,
                "scores": self.scores,
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, line: str) -> "ManifestEntry":
        return cls(**json.loads(line))


@dataclass(frozen=True)
class MixSpec:
    """Noise types, SNR grid, and the seed that makes the corpus reproducible."""

    noise_types: Sequence[str]
    snr_grid_db: Sequence[float]
    seed: int = 0

    def __post_init__(self):
        if len(self.snr_grid_db) == 0:
            raise ValueError("SNR grid is empty")
        if not np.all(np.isfinite(self.snr_grid_db)):
            raise ValueError("SNR grid contains non-finite values")


def snr_grid_db(low: float, high: float, step: float = 1.0) -> list[float]:
    """Inclusive dB grid, e.g. (-10, 20, 1) -> 31 levels."""
    n = int(round((high - low) / step)) + 1
    return [low + i * step for i in range(n)]


def write_manifest(entries: Iterable[ManifestEntry], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(entry.to_json() + "\n")
    return path


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    with open(path, encoding="utf-8") as fh:
        return [ManifestEntry.from_json(line) for line in fh if line.strip()]


def build_manifest(
    clean_paths: Sequence[str | Path],
    noises: Mapping[str, str | Path],
    mix_spec: MixSpec,
    out_dir: str | Path,
    per_clean: int = 1,
    enhancer: Callable[[Waveform], Waveform] | None = None,
) -> list[ManifestEntry]:
    """Mix degraded utterances and emit their manifest entries.

    Every clean utterance yields one clean entry plus ``per_clean`` noisy
    entries, each mixed at a (noise type, SNR) pair drawn from the seeded
    generator. When ``enhancer`` is given, each noisy utterance also yields
    an enhanced entry produced by running the callable on the noisy audio.
    """
    if not clean_paths:
        raise ValueError("clean utterance list is empty")
    missing = [n for n in mix_spec.noise_types if n not in noises]
    if missing:
        raise ValueError(f"mix spec names unknown noises: {missing}")

    out_dir = Path(out_dir)
    rng = np.random.default_rng(mix_spec.seed)
    noise_cache = {name: load_waveform(noises[name]) for name in mix_spec.noise_types}
    entries: list[ManifestEntry] = []

    for clean_path in clean_paths:
        clean_path = Path(clean_path)
        cid = clean_path.stem
        try:
            clean = load_waveform(clean_path)
        except Exception as exc:
            raise RuntimeError(f"{cid}: failed to load clean audio") from exc
        entries.append(
            ManifestEntry(
                utt_id=cid,
                clean_path=str(clean_path),
                degraded_path=str(clean_path),
                kind="clean",
            )
        )
        for j in range(per_clean):
            noise_name = str(rng.choice(list(mix_spec.noise_types)))
            snr = float(rng.choice(np.asarray(mix_spec.snr_grid_db, dtype=np.float64)))
            noisy_id = f"{cid}__{j:02d}_{noise_name}_{snr:+g}dB"
            try:
                noisy = mix_at_snr(clean, noise_cache[noise_name], snr, rng)
                noisy_path = save_waveform(noisy, out_dir / "noisy" / f"{noisy_id}.wav")
            except Exception as exc:
                raise RuntimeError(f"{noisy_id}: failed to mix/write") from exc
            entries.append(
                ManifestEntry(
                    utt_id=noisy_id,
                    clean_path=str(clean_path),
                    degraded_path=str(noisy_path),
                    kind="noisy",
                    noise_type=noise_name,
                    snr_db=snr,
                )
            )
            if enhancer is not None:
                enh_id = f"{noisy_id}__enh"
                try:
                    enhanced = enhancer(noisy)
                    enh_path = save_waveform(
                        enhanced, out_dir / "enhanced" / f"{enh_id}.wav"
                    )
                except Exception as exc:
                    raise RuntimeError(f"{enh_id}: enhancer failed") from exc
                entries.append(
                    ManifestEntry(
                        utt_id=enh_id,
                        clean_path=str(clean_path),
                        degraded_path=str(enh_path),
                        kind="enhanced",
                        noise_type=noise_name,
                        snr_db=snr,
                    )
                )
    return entries


def split_seen_unseen(
    entries: Sequence[ManifestEntry],
    unseen_noises: Sequence[str],
    train_noises: Sequence[str] | None = None,
    test_seen_fraction: float = 0.0,
    seed: int = 0,
) -> tuple[list[ManifestEntry], list[ManifestEntry], list[ManifestEntry]]:
    """Partition entries into (train, test_seen, test_unseen).

    Entries whose noise type is in ``unseen_noises`` form test_unseen.
    Of the remaining clean source utterances, a seeded ``test_seen_fraction``
    is held out with all their derived entries as test_seen. Training noise
    names (given explicitly, or observed minus unseen) must be disjoint from
    the unseen list.
    """
    unseen = set(unseen_noises)
    observed = {e.noise_type for e in entries if e.noise_type is not None}
    train_set = set(train_noises) if train_noises is not None else observed - unseen
    overlap = train_set & unseen
    if overlap:
        raise ValueError(f"unseen noises overlap training noises: {sorted(overlap)}")

    base_ids = sorted(
        {Path(e.clean_path).stem for e in entries if e.noise_type not in unseen}
    )
    rng = np.random.default_rng(seed)
    n_heldout = int(round(test_seen_fraction * len(base_ids)))
    heldout = set(rng.permutation(base_ids)[:n_heldout]) if n_heldout else set()

    train, test_seen, test_unseen = [], [], []
    for entry in entries:
        if entry.noise_type in unseen:
            tagged = replace(entry, split="test_unseen")
            test_unseen.append(tagged)
        elif Path(entry.clean_path).stem in heldout:
            tagged = replace(entry, split="test_seen")
            test_seen.append(tagged)
        else:
            tagged = replace(entry, split="train")
            train.append(tagged)
    return train, test_seen, test_unseen
