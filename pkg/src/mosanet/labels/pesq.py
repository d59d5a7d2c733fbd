"""External PESQ scorer adapter.

PESQ is never reimplemented here. The adapter runs a configured executable
as ``<cmd> <clean.wav> <degraded.wav>`` and expects a single decimal score
on stdout (wideband vs narrowband is the executable's concern). The command
comes from the MOSANET_PESQ_CMD environment variable or the ``pesq.command``
config key. Scores are cached per (clean, degraded) pair in a JSONL file
guarded by a file lock.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
from pathlib import Path

from filelock import FileLock

ENV_COMMAND = "MOSANET_PESQ_CMD"


class PesqAdapterError(RuntimeError):
    pass


def pesq_command(override: str | None = None) -> list[str] | None:
    """Resolve the adapter command line, or None when unconfigured."""
    raw = override if override is not None else os.environ.get(ENV_COMMAND)
    if not raw:
        return None
    return shlex.split(raw)


class PesqCache:
    """JSONL score cache: one {clean, degraded, metric, value} object per line."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = FileLock(str(self.path) + ".lock")
        self._scores: dict[tuple[str, str], float] = {}
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    rec = json.loads(line)
                    self._scores[(rec["clean"], rec["degraded"])] = float(rec["value"])

    def get(self, clean: str, degraded: str) -> float | None:
        return self._scores.get((clean, degraded))

    def put(self, clean: str, degraded: str, value: float) -> None:
        self._scores[(clean, degraded)] = value
        self.path.parent.mkdir(parents=True, exist_ok=True)
        record = {"clean": clean, "degraded": degraded, "metric": "pesq", "value": value}
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")


def pesq_external(
    clean_path: str | Path,
    degraded_path: str | Path,
    command: list[str] | None = None,
    cache: PesqCache | None = None,
) -> float:
    """Score a pair through the external adapter, consulting the cache first."""
    clean_path = str(clean_path)
    degraded_path = str(degraded_path)
    if cache is not None:
        hit = cache.get(clean_path, degraded_path)
        if hit is not None:
            return hit
    if command is None:
        command = pesq_command()
    if command is None:
        raise PesqAdapterError(
            f"pesq adapter unavailable: set {ENV_COMMAND} or pesq.command"
        )
    proc = subprocess.run(
        [*command, clean_path, degraded_path],
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        raise PesqAdapterError(
            f"pesq adapter exited {proc.returncode} for {degraded_path}: "
            f"{proc.stderr.strip() or proc.stdout.strip()}"
        )
    try:
        value = float(proc.stdout.strip().split()[-1])
    except (ValueError, IndexError) as exc:
        raise PesqAdapterError(
            f"pesq adapter printed no score: {proc.stdout!r}"
        ) from exc
    if cache is not None:
        cache.put(clean_path, degraded_path, value)
    return value
