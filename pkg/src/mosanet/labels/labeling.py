"""Batch objective-score labeling of corpus manifests."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Iterable, Sequence

from ..audio import load_waveform
from ..corpus import ManifestEntry
from . import metrics
from .pesq import PesqAdapterError, PesqCache, pesq_external

DEFAULT_METRICS = ("pesq", "stoi", "sdi")


def _label_one(
    entry: ManifestEntry,
    which: frozenset[str],
    pesq_cmd: list[str] | None,
    cache: PesqCache | None,
) -> tuple[ManifestEntry, str | None]:
    scores = dict(entry.scores or {})
    missing = [m for m in which if m not in scores]
    if not missing:
        return entry, None
    failure = None
    try:
        if entry.kind == "clean":
            if "stoi" in missing:
                scores["stoi"] = 1.0
            if "sdi" in missing:
                scores["sdi"] = 0.0
            if "pesq" in missing:
                scores["pesq"] = pesq_external(
                    entry.clean_path, entry.clean_path, pesq_cmd, cache
                )
        else:
            clean = load_waveform(entry.clean_path)
            degraded = load_waveform(entry.degraded_path)
            if "stoi" in missing:
                scores["stoi"] = metrics.stoi(clean, degraded)
            if "sdi" in missing:
                aligned = metrics.align_pair(clean, degraded)
                scores["sdi"] = metrics.sdi(*aligned)
            if "pesq" in missing:
                scores["pesq"] = pesq_external(
                    entry.clean_path, entry.degraded_path, pesq_cmd, cache
                )
    except PesqAdapterError as exc:
        # stoi/sdi already filled above; pesq stays missing
        failure = str(exc)
    except Exception as exc:
        failure = f"{type(exc).__name__}: {exc}"
    return replace(entry, scores=scores or None), failure


def gen_labels(
    entries: Sequence[ManifestEntry],
    which: Iterable[str] = DEFAULT_METRICS,
    jobs: int = 1,
    pesq_cmd: list[str] | None = None,
    pesq_cache: PesqCache | None = None,
) -> tuple[list[ManifestEntry], dict[str, str]]:
    """Fill the score map of every entry for the requested metrics.

    Clean entries get their identity scores (stoi 1, sdi 0, pesq self-score).
    Already-present scores are kept, so re-running is a no-op. Per-entry
    failures are collected and returned instead of aborting the run.
    """
    which_set = frozenset(which)
    unknown = which_set - set(DEFAULT_METRICS)
    if unknown:
        raise ValueError(f"unknown metrics requested: {sorted(unknown)}")

    def work(entry: ManifestEntry) -> tuple[ManifestEntry, str | None]:
        return _label_one(entry, which_set, pesq_cmd, pesq_cache)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, entries))
    else:
        results = [work(e) for e in entries]

    labeled = [entry for entry, _ in results]
    failures = {
        entry.utt_id: msg for entry, msg in results if msg is not None
    }
    return labeled, failures
