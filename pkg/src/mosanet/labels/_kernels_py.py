"""Pure-numpy metric frame kernels (fallback backend).

Same contracts as the compiled backend in ``_kernels_cy``; see
``mosanet.labels.kernels`` for the dispatch. Inputs are float64 arrays
prepared by ``mosanet.labels.metrics`` (framing, windowing, band energies).
"""

from __future__ import annotations

import numpy as np

BACKEND = "python"


def ssnr_frame_values(
    clean: np.ndarray,
    processed: np.ndarray,
    frame_len: int,
    hop: int,
    clamp_lo: float,
    clamp_hi: float,
) -> np.ndarray:
    """Per-frame clamped 10*log10(sum c^2 / sum (c-p)^2) over complete frames."""
    n = clean.shape[0]
    if n < frame_len:
        return np.empty(0, dtype=np.float64)
    n_frames = 1 + (n - frame_len) // hop
    idx = np.arange(frame_len)[None, :] + hop * np.arange(n_frames)[:, None]
    c = clean[idx]
    e = c - processed[idx]
    num = np.sum(c * c, axis=1)
    den = np.sum(e * e, axis=1)
    out = np.full(n_frames, clamp_hi, dtype=np.float64)
    live = den > 0.0
    with np.errstate(divide="ignore"):
        ratio = np.where(num[live] > 0.0, num[live] / den[live], 0.0)
        vals = np.where(ratio > 0.0, 10.0 * np.log10(np.maximum(ratio, 1e-300)), -np.inf)
    out[live] = np.clip(vals, clamp_lo, clamp_hi)
    return out


def _levinson(r: np.ndarray, order: int) -> np.ndarray | None:
    """LPC vector [1, -a1, ..., -aP] from autocorrelation lags, None if unstable."""
    a = np.zeros(order, dtype=np.float64)
    err = r[0]
    for i in range(order):
        if err <= 0.0:
            return None
        acc = r[i + 1] - np.dot(a[:i], r[i:0:-1])
        k = acc / err
        a_new = a.copy()
        a_new[i] = k
        a_new[:i] = a[:i] - k * a[i - 1 :: -1][:i]
        a = a_new
        err *= 1.0 - k * k
    if err <= 0.0 or not np.all(np.isfinite(a)):
        return None
    return np.concatenate(([1.0], -a))


def _toeplitz_quadratic(a: np.ndarray, r: np.ndarray) -> float:
    """a^T T(r) a using lag weights: w0 = sum a_i^2, wk = 2 sum a_i a_{i+k}."""
    order = a.shape[0] - 1
    total = r[0] * float(np.dot(a, a))
    for k in range(1, order + 1):
        total += 2.0 * r[k] * float(np.dot(a[:-k], a[k:]))
    return total


def llr_frame_values(
    clean_frames: np.ndarray,
    proc_frames: np.ndarray,
    order: int,
) -> tuple[np.ndarray, int]:
    """Per-frame LPC log-likelihood ratio; unstable frames are skipped and counted."""
    n_frames = clean_frames.shape[0]
    values: list[float] = []
    skipped = 0
    for f in range(n_frames):
        cf = clean_frames[f]
        pf = proc_frames[f]
        r_c = np.array([np.dot(cf[: cf.size - k], cf[k:]) for k in range(order + 1)])
        r_p = np.array([np.dot(pf[: pf.size - k], pf[k:]) for k in range(order + 1)])
        a_c = _levinson(r_c, order)
        a_p = _levinson(r_p, order)
        if a_c is None or a_p is None:
            skipped += 1
            continue
        num = _toeplitz_quadratic(a_p, r_c)
        den = _toeplitz_quadratic(a_c, r_c)
        if num <= 0.0 or den <= 0.0 or not np.isfinite(num / den):
            skipped += 1
            continue
        values.append(float(np.log(num / den)))
    return np.asarray(values, dtype=np.float64), skipped


def wss_frame_distances(
    clean_db: np.ndarray,
    proc_db: np.ndarray,
    k_max: float,
    k_locmax: float,
) -> np.ndarray:
    """Weighted spectral-slope distance per frame from critical-band dB energies."""
    n_frames, n_bands = clean_db.shape
    out = np.empty(n_frames, dtype=np.float64)
    for f in range(n_frames):
        out[f] = _wss_one(clean_db[f], proc_db[f], n_bands, k_max, k_locmax)
    return out


def _find_peaks(energy: np.ndarray, slope: np.ndarray, n_bands: int) -> np.ndarray:
    peaks = np.empty(n_bands - 1, dtype=np.float64)
    for i in range(n_bands - 1):
        n = i
        if slope[i] > 0.0:
            while n < n_bands - 2 and slope[n] > 0.0:
                n += 1
            # slope[n] <= 0 (or last slope): energy[n] is the local crest
            peaks[i] = energy[n] if slope[n] <= 0.0 else energy[n + 1]
        else:
            while n > 0 and slope[n] <= 0.0:
                n -= 1
            # slope[n] > 0: energy[n+1] is the crest; else falling from band 0
            peaks[i] = energy[n + 1] if slope[n] > 0.0 else energy[0]
    return peaks


def _wss_one(
    c_db: np.ndarray, p_db: np.ndarray, n_bands: int, k_max: float, k_locmax: float
) -> float:
    slope_c = np.diff(c_db)
    slope_p = np.diff(p_db)
    peak_c = _find_peaks(c_db, slope_c, n_bands)
    peak_p = _find_peaks(p_db, slope_p, n_bands)
    w_c = (k_max / (k_max + c_db.max() - c_db[:-1])) * (
        k_locmax / (k_locmax + peak_c - c_db[:-1])
    )
    w_p = (k_max / (k_max + p_db.max() - p_db[:-1])) * (
        k_locmax / (k_locmax + peak_p - p_db[:-1])
    )
    w = 0.5 * (w_c + w_p)
    return float(np.dot(w, (slope_c - slope_p) ** 2) / np.sum(w))
