"""Shared synthetic-signal builders for the test suite."""

import numpy as np
from scipy.signal import butter, lfilter

from mosanet.audio import SAMPLE_RATE, Waveform


def speech_like(duration_s=1.0, seed=0, level=0.3):
    """Harmonic source + formant-band noise with syllabic modulation.

    Every analysis frame carries energy (the modulation floor stays above
    zero), which several exact metric identities rely on.
    """
    rng = np.random.default_rng(seed)
    n = int(duration_s * SAMPLE_RATE)
    t = np.arange(n) / SAMPLE_RATE
    f0 = 120.0 + 40.0 * np.sin(2 * np.pi * 1.3 * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0) / SAMPLE_RATE
    source = sum(np.sin(k * phase) / k for k in range(1, 6))
    b, a = butter(2, [300 / 8000, 3400 / 8000], btype="band")
    hiss = lfilter(b, a, rng.standard_normal(n))
    hiss /= np.max(np.abs(hiss))
    mod = 0.25 + 0.75 * (0.5 + 0.5 * np.sin(2 * np.pi * (3.1 * t + rng.uniform(0, 1)))) ** 2
    sig = (0.7 * source + 0.5 * hiss) * mod
    return Waveform(level * sig / np.max(np.abs(sig)))


def white_noise(duration_s=1.0, seed=1, level=0.3):
    rng = np.random.default_rng(seed)
    sig = rng.standard_normal(int(duration_s * SAMPLE_RATE))
    return Waveform(level * sig / np.max(np.abs(sig)))


def tone(freq_hz, duration_s=1.0, amplitude=0.5):
    t = np.arange(int(duration_s * SAMPLE_RATE)) / SAMPLE_RATE
    return Waveform(amplitude * np.sin(2 * np.pi * freq_hz * t))


def quality_proxy(snr_db):
    """Monotone SNR -> quality-score stand-in on the usual PESQ-like scale."""
    return 1.0 + 3.5 / (1.0 + np.exp(-(snr_db - 5.0) / 4.0))


def labeled_toy_corpus(tmp_path, n_utts=8, duration_s=0.55, seed=0, split="train"):
    """Noisy utterances over an SNR spread with analytic stoi/sdi labels and
    the quality proxy standing in for the external scorer."""
    from mosanet.audio import mix_at_snr, save_waveform
    from mosanet.corpus import ManifestEntry
    from mosanet.labels import sdi, stoi

    rng = np.random.default_rng(seed)
    entries = []
    snrs = np.linspace(-8.0, 18.0, n_utts)
    for i, snr in enumerate(snrs):
        clean = speech_like(duration_s, seed=seed * 1000 + i)
        noise = white_noise(duration_s + 0.3, seed=seed * 1000 + 500 + i)
        noisy = mix_at_snr(clean, noise, float(snr), rng=rng)
        cpath = save_waveform(clean, tmp_path / f"clean_{i:03d}.wav")
        npath = save_waveform(noisy, tmp_path / f"noisy_{i:03d}.wav")
        entries.append(
            ManifestEntry(
                utt_id=f"utt{i:03d}",
                clean_path=str(cpath),
                degraded_path=str(npath),
                kind="noisy",
                noise_type="white",
                snr_db=float(snr),
                split=split,
                scores={
                    "pesq": float(quality_proxy(snr)),
                    "stoi": float(stoi(clean, noisy)),
                    "sdi": float(sdi(clean, noisy)),
                },
            )
        )
    return entries
