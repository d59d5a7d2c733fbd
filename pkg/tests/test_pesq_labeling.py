import json
import sys

import pytest

from helpers import speech_like, white_noise
from mosanet.audio import mix_at_snr, save_waveform
from mosanet.corpus import ManifestEntry, score_value
from mosanet.labels import PesqAdapterError, PesqCache, gen_labels, pesq_external


@pytest.fixture
def stub_scorer(tmp_path):
    """Adapter contract stand-in: prints one decimal score on stdout."""
    script = tmp_path / "fake_pesq.py"
    script.write_text(
        "import sys\n"
        "clean, degraded = sys.argv[1], sys.argv[2]\n"
        "print('4.55' if clean == degraded else '2.75')\n"
    )
    return [sys.executable, str(script)]


@pytest.fixture
def wav_pair(tmp_path):
    clean = speech_like(0.5, seed=0)
    noisy = mix_at_snr(clean, white_noise(1.0, seed=9), 5.0, rng=0)
    cpath = save_waveform(clean, tmp_path / "clean.wav")
    npath = save_waveform(noisy, tmp_path / "noisy.wav")
    return cpath, npath


def test_adapter_self_score(stub_scorer, wav_pair):
    cpath, _ = wav_pair
    for _ in range(3):
        assert pesq_external(cpath, cpath, command=stub_scorer) == 4.55


def test_adapter_missing_is_documented_error(wav_pair, monkeypatch):
    monkeypatch.delenv("MOSANET_PESQ_CMD", raising=False)
    cpath, npath = wav_pair
    with pytest.raises(PesqAdapterError, match="pesq adapter unavailable"):
        pesq_external(cpath, npath)


def test_adapter_failure_carries_diagnostics(tmp_path, wav_pair):
    bad = tmp_path / "bad.py"
    bad.write_text("import sys; sys.stderr.write('boom'); sys.exit(3)\n")
    cpath, npath = wav_pair
    with pytest.raises(PesqAdapterError, match="exited 3.*boom"):
        pesq_external(cpath, npath, command=[sys.executable, str(bad)])


def test_cache_hits_skip_the_adapter(tmp_path, stub_scorer, wav_pair):
    cpath, npath = wav_pair
    cache = PesqCache(tmp_path / "scores.jsonl")
    first = pesq_external(cpath, npath, command=stub_scorer, cache=cache)
    # a broken command proves the cache answered
    second = pesq_external(
        cpath, npath, command=[sys.executable, "-c", "raise SystemExit(1)"], cache=cache
    )
    assert first == second == 2.75
    reloaded = PesqCache(tmp_path / "scores.jsonl")
    assert reloaded.get(str(cpath), str(npath)) == 2.75
    with open(tmp_path / "scores.jsonl") as fh:
        rec = json.loads(fh.readline())
    assert set(rec) == {"clean", "degraded", "metric", "value"}


def _tiny_manifest(tmp_path):
    clean = speech_like(0.6, seed=1)
    noisy = mix_at_snr(clean, white_noise(1.0, seed=3), 0.0, rng=1)
    cpath = save_waveform(clean, tmp_path / "c.wav")
    npath = save_waveform(noisy, tmp_path / "n.wav")
    return [
        ManifestEntry("c", str(cpath), str(cpath), "clean"),
        ManifestEntry("n", str(cpath), str(npath), "noisy", noise_type="white", snr_db=0.0),
    ]


def test_gen_labels_fills_both_entries(tmp_path, stub_scorer):
    entries = _tiny_manifest(tmp_path)
    labeled, failures = gen_labels(entries, which=("pesq", "stoi", "sdi"),
                                   pesq_cmd=stub_scorer)
    assert failures == {}
    clean, noisy = labeled
    assert clean.scores == {"stoi": 1.0, "sdi": 0.0, "pesq": 4.55}
    assert noisy.scores["pesq"] == 2.75
    assert 0.0 < noisy.scores["stoi"] <= 1.0
    assert noisy.scores["sdi"] > 0.0


def test_gen_labels_without_adapter_marks_pesq_missing(tmp_path, monkeypatch):
    monkeypatch.delenv("MOSANET_PESQ_CMD", raising=False)
    entries = _tiny_manifest(tmp_path)
    labeled, failures = gen_labels(entries, which=("pesq", "stoi", "sdi"))
    assert set(failures) == {"c", "n"}
    for entry in labeled:
        assert "pesq" not in entry.scores
        assert {"stoi", "sdi"} <= set(entry.scores)


def test_gen_labels_idempotent(tmp_path, stub_scorer):
    entries = _tiny_manifest(tmp_path)
    once, _ = gen_labels(entries, pesq_cmd=stub_scorer)
    twice, failures = gen_labels(once, pesq_cmd=stub_scorer)
    assert failures == {}
    assert twice == once


def test_gen_labels_keeps_inputs_unchanged(tmp_path, stub_scorer):
    entries = _tiny_manifest(tmp_path)
    gen_labels(entries, pesq_cmd=stub_scorer)
    assert all(e.scores is None for e in entries)


def test_gen_labels_parallel_matches_serial(tmp_path, stub_scorer):
    entries = _tiny_manifest(tmp_path) * 3
    serial, _ = gen_labels(entries, which=("stoi", "sdi"), jobs=1)
    parallel, _ = gen_labels(entries, which=("stoi", "sdi"), jobs=4)
    assert [e.scores for e in serial] == [e.scores for e in parallel]


def test_gen_labels_records_per_entry_failures(tmp_path, stub_scorer):
    entries = _tiny_manifest(tmp_path)
    broken = ManifestEntry("ghost", "missing.wav", "missing.wav", "clean")
    labeled, failures = gen_labels([*entries, broken], which=("stoi", "sdi"))
    assert list(failures) == []  # clean entries need no audio for stoi/sdi
    noisy_broken = ManifestEntry("gone", "missing.wav", "gone.wav", "noisy",
                                 noise_type="x", snr_db=1.0)
    labeled, failures = gen_labels([*entries, noisy_broken], which=("stoi", "sdi"))
    assert "gone" in failures
    assert score_value(labeled[1], "stoi") is not None  # other entries still labeled
