"""Uncertainty and significance machinery.

Percentile bootstrap over segment rows, paired t-test with Cohen's d,
Wilcoxon signed-rank (normal approximation with tie correction), and
Pearson/Spearman correlations. Formulas are written out here rather than
delegated to a stats library so every number is reproducible from the
documented definitions; scipy supplies only the Student-t CDF. The test
suite cross-checks each routine against independent oracles.

The pairing unit throughout is the per-segment mean squared error across
the 19 dimensions: with that unit, Cohen's d ~ 0.31 at n = 1202 gives
|t| = d * sqrt(n) ~ 10.7, and that identity holds bit-exactly here
because t is computed from d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import stdtr

from . import metrics
from .errors import (
    ContractError,
    DegeneracyError,
    SmallSampleError,
    ZeroVarianceError,
)
from .rng import splitmix_u64_array, splitmix_uniform_matrix

P_FLOOR = 1e-300

STATISTIC_NAMES = ("mean_per_dim_r2", "pooled_r2")


def clamp_p(p: float) -> float:
    """Keep p-values inside (0, 1]; underflow is floored at 1e-300."""
    return min(1.0, max(float(p), P_FLOOR))


def format_p(p: float) -> float | str:
    """Report representation: values at the floor become '< 1e-300'."""
    return "< 1e-300" if p <= P_FLOOR else float(p)


# ---------------------------------------------------------------------------
# paired series


@dataclass(eq=False)
class PairedErrorSeries:
    """Per-segment MSE for two models over the same aligned segments."""

    segment_ids: list[str]
    errors_a: np.ndarray
    errors_b: np.ndarray

    def __post_init__(self):
        self.errors_a = np.asarray(self.errors_a, dtype=np.float64)
        self.errors_b = np.asarray(self.errors_b, dtype=np.float64)

    def validate(self) -> None:
        n = len(self.segment_ids)
        if self.errors_a.shape != (n,) or self.errors_b.shape != (n,):
            raise ContractError(
                f"series lengths disagree: {n} ids, {self.errors_a.shape} vs {self.errors_b.shape}"
            )
        if not (np.all(np.isfinite(self.errors_a)) and np.all(np.isfinite(self.errors_b))):
            raise ContractError("non-finite error values in paired series")

    @property
    def differences(self) -> np.ndarray:
        return self.errors_a - self.errors_b


def paired_t(series: PairedErrorSeries) -> tuple[float, float, float]:
    """Paired t-test on errors_a − errors_b.

    Returns (t, two-sided p, Cohen's d) with sample (n−1) sd. t is
    computed as d·√n so the algebraic identity |t| = |d|·√n is exact by
    construction, not merely up to rounding.
    """
    series.validate()
    d = series.differences
    n = d.shape[0]
    if n < 2:
        raise ContractError(f"paired t-test needs n >= 2, got {n}")
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise ZeroVarianceError("differences have zero variance; t undefined")
    cohens_d = float(d.mean()) / sd
    t = cohens_d * math.sqrt(n)
    p = clamp_p(2.0 * float(stdtr(n - 1, -abs(t))))
    return t, p, cohens_d


def wilcoxon_signed_rank(
    series: PairedErrorSeries, min_n: int = 10
) -> tuple[float, float]:
    """Wilcoxon signed-rank test, normal approximation with tie correction.

    Zero differences are dropped. The approximation needs a sample of at
    least `min_n` nonzero differences (default 10); below that the exact
    test would be required, which is out of scope, so a small-sample
    error is raised instead. Returns (W = positive-rank sum, two-sided p).
    """
    series.validate()
    d = series.differences
    d = d[d != 0.0]
    n = d.shape[0]
    if n == 0:
        raise ZeroVarianceError("all differences are zero; test undefined")
    if n < min_n:
        raise SmallSampleError(
            f"only {n} nonzero differences; normal approximation needs >= {min_n}"
        )
    ranks = average_ranks(np.abs(d))
    w = float(ranks[d > 0.0].sum())
    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(np.abs(d), return_counts=True)
    tie_term = float((counts.astype(np.float64) ** 3 - counts).sum()) / 48.0
    var -= tie_term
    sd = math.sqrt(var)
    # Continuity correction: shift W half a unit toward the mean.
    if w > mean:
        z = (w - mean - 0.5) / sd
    elif w < mean:
        z = (w - mean + 0.5) / sd
    else:
        z = 0.0
    p = clamp_p(math.erfc(abs(z) / math.sqrt(2.0)))
    return w, p


# ---------------------------------------------------------------------------
# correlations


def average_ranks(values) -> np.ndarray:
    """1-based ranks with ties assigned the average of their positions."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ContractError(f"expected 1-D values, got shape {v.shape}")
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.shape[0], dtype=np.float64)
    i = 0
    n = v.shape[0]
    while i < n:
        j = i
        while j + 1 < n and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _corr_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    xv = np.asarray(x, dtype=np.float64)
    yv = np.asarray(y, dtype=np.float64)
    if xv.ndim != 1 or yv.ndim != 1 or xv.shape != yv.shape:
        raise ContractError(f"correlation needs equal-length 1-D inputs, got {xv.shape} and {yv.shape}")
    if not (np.all(np.isfinite(xv)) and np.all(np.isfinite(yv))):
        raise ContractError("non-finite values in correlation input")
    return xv, yv


def pearson(x, y) -> float:
    """Sample Pearson correlation."""
    xv, yv = _corr_pair(x, y)
    if xv.shape[0] < 2:
        raise ContractError(f"pearson needs n >= 2, got {xv.shape[0]}")
    cx = xv - xv.mean()
    cy = yv - yv.mean()
    sx = float((cx * cx).sum())
    sy = float((cy * cy).sum())
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("constant input; correlation undefined")
    return float((cx * cy).sum() / math.sqrt(sx * sy))


def spearman(x, y) -> tuple[float, float]:
    """Spearman rho via average ranks, p from the t approximation (n−2 dof)."""
    xv, yv = _corr_pair(x, y)
    n = xv.shape[0]
    if n < 3:
        raise ContractError(f"spearman needs n >= 3, got {n}")
    rho = pearson(average_ranks(xv), average_ranks(yv))
    if abs(rho) >= 1.0:
        return rho, P_FLOOR
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    p = clamp_p(2.0 * float(stdtr(n - 2, -abs(t))))
    return rho, p


# ---------------------------------------------------------------------------
# bootstrap


@dataclass
class BootstrapConfig:
    resamples: int = 10_000
    confidence: float = 0.95
    seed: int = 42

    def validate(self) -> None:
        if self.resamples < 1:
            raise ContractError(f"resamples must be >= 1, got {self.resamples}")
        if not 0.0 < self.confidence < 1.0:
            raise ContractError(f"confidence must be in (0, 1), got {self.confidence}")


_CHUNK = 2048


def _resample_indices(seed: int, start: int, count: int, n: int) -> np.ndarray:
    """Index matrix for resamples [start, start+count).

    Resample r draws its own seed (the r-th output of the SplitMix64
    stream seeded with `seed`) and its row is that counter stream mapped
    to [0, n): index i = floor(uniform_i * n). Fully counter-based, so
    any chunking scheme yields identical indices.
    """
    seeds = splitmix_u64_array(seed, count, offset=start)
    u = splitmix_uniform_matrix(seeds, n)
    idx = (u * n).astype(np.int64)
    return np.minimum(idx, n - 1)


def _stat_per_resample(
    preds: np.ndarray, targets: np.ndarray, idx: np.ndarray, statistic: str
) -> tuple[np.ndarray, np.ndarray]:
    """Statistic value per resample row plus a degeneracy mask."""
    p = preds[idx]    # (chunk, n, d)
    t = targets[idx]
    # Degenerate = exactly constant (see metrics.r2_per_dimension).
    constant = (t == t[:, :1, :]).all(axis=1)        # (chunk, d)
    if statistic == "mean_per_dim_r2":
        mean_t = t.mean(axis=1, keepdims=True)
        ss_res = ((t - p) ** 2).sum(axis=1)          # (chunk, d)
        ss_tot = ((t - mean_t) ** 2).sum(axis=1)
        bad = (constant | (ss_tot == 0.0)).any(axis=1)
        ss_tot = np.where(ss_tot == 0.0, 1.0, ss_tot)
        values = (1.0 - ss_res / ss_tot).mean(axis=1)
    else:
        mean_t = t.mean(axis=(1, 2), keepdims=True)
        ss_res = ((t - p) ** 2).sum(axis=(1, 2))
        ss_tot = ((t - mean_t) ** 2).sum(axis=(1, 2))
        bad = (t == t[:, :1, :1]).all(axis=(1, 2)) | (ss_tot == 0.0)
        ss_tot = np.where(ss_tot == 0.0, 1.0, ss_tot)
        values = 1.0 - ss_res / ss_tot
    return values, bad


def bootstrap_ci(
    preds, targets, statistic: str, config: BootstrapConfig
) -> tuple[float, float, float]:
    """Percentile bootstrap over segment rows.

    Returns (point, lo, hi). Degenerate resamples (zero target variance)
    are skipped and counted; more than 1% skipped aborts with a
    degeneracy error. Deterministic for a fixed config.seed regardless of
    chunking or scheduling.
    """
    if statistic not in STATISTIC_NAMES:
        raise ContractError(
            f"unknown statistic {statistic!r}, expected one of {STATISTIC_NAMES}"
        )
    config.validate()
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if t.ndim == 1:
        t = t[:, None]
    if p.shape != t.shape:
        raise ContractError(f"prediction shape {p.shape} != target shape {t.shape}")
    n = p.shape[0]
    if n < 2:
        raise ContractError(f"bootstrap needs n >= 2, got {n}")
    if statistic == "mean_per_dim_r2":
        point = float(metrics.r2_per_dimension(p, t).mean())
    else:
        point = metrics.r2_pooled(p, t)

    values = np.empty(config.resamples, dtype=np.float64)
    keep = np.empty(config.resamples, dtype=bool)
    for start in range(0, config.resamples, _CHUNK):
        count = min(_CHUNK, config.resamples - start)
        idx = _resample_indices(config.seed, start, count, n)
        vals, bad = _stat_per_resample(p, t, idx, statistic)
        values[start : start + count] = vals
        keep[start : start + count] = ~bad
    skipped = int(config.resamples - keep.sum())
    if skipped > 0.01 * config.resamples:
        raise DegeneracyError(
            f"{skipped} of {config.resamples} resamples were degenerate (> 1%)"
        )
    valid = values[keep]
    alpha = (1.0 - config.confidence) / 2.0
    lo = float(np.quantile(valid, alpha))
    hi = float(np.quantile(valid, 1.0 - alpha))
    return point, lo, hi
