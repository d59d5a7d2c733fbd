"""Correlation and significance statistics for prediction/truth pairs.

LCC is Pearson correlation, SRCC is Pearson over average ranks (ties get
their mean rank), MSE is the plain mean squared difference. The grouped
paired t-test averages utterances in seeded-shuffled groups (default 5 per
group) and tests the group means with the exact t distribution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

P_FLOOR = 1e-300


class DegenerateStatistic(ValueError):
    pass


@dataclass(frozen=True)
class PairedScores:
    predicted: np.ndarray
    truth: np.ndarray
    ids: tuple[str, ...] | None = None

    def __post_init__(self):
        predicted = np.asarray(self.predicted, dtype=np.float64)
        truth = np.asarray(self.truth, dtype=np.float64)
        if predicted.shape != truth.shape or predicted.ndim != 1:
            raise ValueError("predicted/truth must be aligned 1-D sequences")
        if predicted.size < 2:
            raise ValueError("need at least two pairs")
        if self.ids is not None and len(self.ids) != predicted.size:
            raise ValueError("ids must align with the scores")
        object.__setattr__(self, "predicted", predicted)
        object.__setattr__(self, "truth", truth)


def _as_pair(pairs) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pairs, PairedScores):
        return pairs.predicted, pairs.truth
    a, b = pairs
    return np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)


def lcc(pairs) -> float:
    """Pearson linear correlation coefficient."""
    x, y = _as_pair(pairs)
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.sum(xc**2))
    sy = np.sqrt(np.sum(yc**2))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateStatistic("degenerate: zero variance")
    return float(np.sum(xc * yc) / (sx * sy))


def average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks; tied values share the mean of their rank range."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def srcc(pairs) -> float:
    """Spearman rank correlation: Pearson on average ranks."""
    x, y = _as_pair(pairs)
    return lcc((average_ranks(x), average_ranks(y)))


def mse(pairs) -> float:
    x, y = _as_pair(pairs)
    return float(np.mean((x - y) ** 2))


def t_sf_two_sided(t: float, df: int) -> float:
    """Exact two-tailed p-value via the regularized incomplete beta."""
    if not np.isfinite(t):
        return P_FLOOR
    x = df / (df + t * t)
    p = float(special.betainc(df / 2.0, 0.5, x))
    return max(p, P_FLOOR)


def grouped_ttest(
    scores_a,
    scores_b,
    group_size: int = 5,
    seed: int = 0,
) -> tuple[float, float, int]:
    """Two-tailed paired t-test on per-group means of matched score lists.

    Utterances are shuffled with the given seed, cut into consecutive
    groups of ``group_size``, and averaged; the test runs on the paired
    group means. Returns (t, p, number of group pairs).
    """
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("score lists must be aligned 1-D sequences")
    if a.size % group_size != 0:
        raise ValueError(f"{a.size} scores do not divide into groups of {group_size}")
    n_groups = a.size // group_size
    if n_groups < 2:
        raise ValueError("need at least two groups")
    order = np.random.default_rng(seed).permutation(a.size)
    means_a = a[order].reshape(n_groups, group_size).mean(axis=1)
    means_b = b[order].reshape(n_groups, group_size).mean(axis=1)
    diff = means_a - means_b
    if np.all(diff == 0.0):
        return 0.0, 1.0, n_groups
    sd = float(np.std(diff, ddof=1))
    if sd == 0.0:
        # constant nonzero shift: t diverges
        return float(np.sign(diff[0]) * np.inf), P_FLOOR, n_groups
    t = float(np.mean(diff) / (sd / np.sqrt(n_groups)))
    return t, t_sf_two_sided(t, n_groups - 1), n_groups


def write_ttest_report(rows, path: str | Path) -> Path:
    """CSV report: comparison, metric, t, p, significant@0.05."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["comparison", "metric", "t", "p", "significant@0.05"])
        for comparison, metric, t, p in rows:
            writer.writerow([comparison, metric, f"{t:.6g}", f"{p:.6g}", str(p < 0.05)])
    return path


def scatter_emit(pairs, out_path: str | Path, axis_labels=("true", "predicted")) -> Path:
    """SVG scatter with the least-squares line and the identity diagonal.

    The raw pairs land in a CSV sidecar next to the plot for re-plotting.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x, y = _as_pair(pairs)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)

    csv_path = out_path.with_suffix(".csv")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(axis_labels))
        for xi, yi in zip(x, y):
            writer.writerow([repr(float(xi)), repr(float(yi))])

    slope, intercept = np.polyfit(x, y, 1)
    lo = float(min(x.min(), y.min()))
    hi = float(max(x.max(), y.max()))
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(x, y, s=12, alpha=0.6)
    line = np.array([lo, hi])
    ax.plot(line, slope * line + intercept, label=f"fit y={slope:.3f}x+{intercept:.3f}")
    ax.plot(line, line, linestyle=":", color="gray", label="identity")
    ax.set_xlabel(axis_labels[0])
    ax.set_ylabel(axis_labels[1])
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, format="svg")
    plt.close(fig)
    return out_path


def regression_line(pairs) -> tuple[float, float]:
    x, y = _as_pair(pairs)
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)
