# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled metric frame kernels (hot path for batch labeling).

Contract-identical to ``_kernels_py``; selected by ``mosanet.labels.kernels``
when the extension was built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, log, log10

cnp.import_array()

BACKEND = "compiled"


def ssnr_frame_values(
    double[::1] clean not None,
    double[::1] processed not None,
    int frame_len,
    int hop,
    double clamp_lo,
    double clamp_hi,
):
    cdef Py_ssize_t n = clean.shape[0]
    if n < frame_len:
        return np.empty(0, dtype=np.float64)
    cdef Py_ssize_t n_frames = 1 + (n - frame_len) // hop
    out_arr = np.empty(n_frames, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t f, i, start
    cdef double num, den, diff, val
    for f in range(n_frames):
        start = f * hop
        num = 0.0
        den = 0.0
        for i in range(frame_len):
            num += clean[start + i] * clean[start + i]
            diff = clean[start + i] - processed[start + i]
            den += diff * diff
        if den == 0.0:
            val = clamp_hi
        elif num == 0.0:
            val = clamp_lo
        else:
            val = 10.0 * log10(num / den)
            if val < clamp_lo:
                val = clamp_lo
            elif val > clamp_hi:
                val = clamp_hi
        out[f] = val
    return out_arr


cdef int _levinson(double* r, double* a, double* a_prev, int order) noexcept nogil:
    """Fill a[0..order] with [1, -a1, ..., -aP]; return 0 if unstable."""
    cdef double err = r[0]
    cdef double acc, k
    cdef int i, j
    for i in range(order):
        a_prev[i] = 0.0
    for i in range(order):
        if err <= 0.0:
            return 0
        acc = r[i + 1]
        for j in range(i):
            acc -= a_prev[j] * r[i - j]
        k = acc / err
        for j in range(i):
            a[j] = a_prev[j] - k * a_prev[i - 1 - j]
        a[i] = k
        for j in range(i + 1):
            a_prev[j] = a[j]
        err *= 1.0 - k * k
    if err <= 0.0:
        return 0
    a[0] = 1.0
    for i in range(order):
        if not isfinite(a_prev[i]):
            return 0
        a[i + 1] = -a_prev[i]
    return 1


cdef double _toeplitz_quadratic(double* a, double* r, int order) noexcept nogil:
    cdef double total = 0.0, acc
    cdef int i, k
    acc = 0.0
    for i in range(order + 1):
        acc += a[i] * a[i]
    total = r[0] * acc
    for k in range(1, order + 1):
        acc = 0.0
        for i in range(order + 1 - k):
            acc += a[i] * a[i + k]
        total += 2.0 * r[k] * acc
    return total


def llr_frame_values(
    double[:, ::1] clean_frames not None,
    double[:, ::1] proc_frames not None,
    int order,
):
    cdef Py_ssize_t n_frames = clean_frames.shape[0]
    cdef Py_ssize_t width = clean_frames.shape[1]
    values_arr = np.empty(n_frames, dtype=np.float64)
    cdef double[::1] values = values_arr
    r_c_arr = np.empty(order + 1, dtype=np.float64)
    r_p_arr = np.empty(order + 1, dtype=np.float64)
    a_c_arr = np.empty(order + 2, dtype=np.float64)
    a_p_arr = np.empty(order + 2, dtype=np.float64)
    scratch_arr = np.empty(order + 2, dtype=np.float64)
    cdef double[::1] r_c = r_c_arr, r_p = r_p_arr
    cdef double[::1] a_c = a_c_arr, a_p = a_p_arr, scratch = scratch_arr
    cdef Py_ssize_t f, i, k, kept = 0
    cdef int skipped = 0, ok
    cdef double acc, num, den
    for f in range(n_frames):
        for k in range(order + 1):
            acc = 0.0
            for i in range(width - k):
                acc += clean_frames[f, i] * clean_frames[f, i + k]
            r_c[k] = acc
            acc = 0.0
            for i in range(width - k):
                acc += proc_frames[f, i] * proc_frames[f, i + k]
            r_p[k] = acc
        ok = _levinson(&r_c[0], &a_c[0], &scratch[0], order)
        if ok:
            ok = _levinson(&r_p[0], &a_p[0], &scratch[0], order)
        if not ok:
            skipped += 1
            continue
        num = _toeplitz_quadratic(&a_p[0], &r_c[0], order)
        den = _toeplitz_quadratic(&a_c[0], &r_c[0], order)
        if num <= 0.0 or den <= 0.0 or not isfinite(num / den):
            skipped += 1
            continue
        values[kept] = log(num / den)
        kept += 1
    return values_arr[:kept].copy(), skipped


def wss_frame_distances(
    double[:, ::1] clean_db not None,
    double[:, ::1] proc_db not None,
    double k_max,
    double k_locmax,
):
    cdef Py_ssize_t n_frames = clean_db.shape[0]
    cdef Py_ssize_t n_bands = clean_db.shape[1]
    out_arr = np.empty(n_frames, dtype=np.float64)
    cdef double[::1] out = out_arr
    slope_c_arr = np.empty(n_bands - 1, dtype=np.float64)
    slope_p_arr = np.empty(n_bands - 1, dtype=np.float64)
    peak_c_arr = np.empty(n_bands - 1, dtype=np.float64)
    peak_p_arr = np.empty(n_bands - 1, dtype=np.float64)
    cdef double[::1] slope_c = slope_c_arr, slope_p = slope_p_arr
    cdef double[::1] peak_c = peak_c_arr, peak_p = peak_p_arr
    cdef Py_ssize_t f, i
    cdef double max_c, max_p, w, w_sum, d_sum, diff
    for f in range(n_frames):
        max_c = clean_db[f, 0]
        max_p = proc_db[f, 0]
        for i in range(1, n_bands):
            if clean_db[f, i] > max_c:
                max_c = clean_db[f, i]
            if proc_db[f, i] > max_p:
                max_p = proc_db[f, i]
        for i in range(n_bands - 1):
            slope_c[i] = clean_db[f, i + 1] - clean_db[f, i]
            slope_p[i] = proc_db[f, i + 1] - proc_db[f, i]
        _peaks(&clean_db[f, 0], &slope_c[0], &peak_c[0], n_bands)
        _peaks(&proc_db[f, 0], &slope_p[0], &peak_p[0], n_bands)
        w_sum = 0.0
        d_sum = 0.0
        for i in range(n_bands - 1):
            w = 0.5 * (
                (k_max / (k_max + max_c - clean_db[f, i]))
                * (k_locmax / (k_locmax + peak_c[i] - clean_db[f, i]))
                + (k_max / (k_max + max_p - proc_db[f, i]))
                * (k_locmax / (k_locmax + peak_p[i] - proc_db[f, i]))
            )
            diff = slope_c[i] - slope_p[i]
            w_sum += w
            d_sum += w * diff * diff
        out[f] = d_sum / w_sum
    return out_arr


cdef void _peaks(
    double* energy, double* slope, double* peaks, Py_ssize_t n_bands
) noexcept nogil:
    cdef Py_ssize_t i, n
    for i in range(n_bands - 1):
        n = i
        if slope[i] > 0.0:
            while n < n_bands - 2 and slope[n] > 0.0:
                n += 1
            peaks[i] = energy[n] if slope[n] <= 0.0 else energy[n + 1]
        else:
            while n > 0 and slope[n] <= 0.0:
                n -= 1
            peaks[i] = energy[n + 1] if slope[n] > 0.0 else energy[0]
