"""
Goodness-of-fit and summary statistics for truncation-limits.
"""

import math
from typing import Callable

import numpy as np
import pandas as pd
from scipy import stats

from errors import EmptySampleError


def ks_statistic(sample, cdf: Callable) -> float:
    """
    Kolmogorov-Smirnov distance sup_x |ECDF(x) - cdf(x)|.

    Computed exactly at the distinct order statistics, where both one-sided
    gaps (right value and left limit of the ECDF) are checked.

    Args:
        sample: Sequence of reals
        cdf: Vectorised continuous CDF

    Returns:
        Statistic in [0, 1]
    """
    values = np.asarray(sample, dtype=float).reshape(-1)
    if values.size == 0:
        raise EmptySampleError("ks_statistic needs a nonempty sample")

    points, counts = np.unique(values, return_counts=True)
    right = np.cumsum(counts) / values.size
    left = np.concatenate([[0.0], right[:-1]])
    f_at = np.asarray(cdf(points), dtype=float)

    # Both sides of every jump
    gaps = np.maximum(np.abs(right - f_at), np.abs(left - f_at))
    return float(gaps.max())


def ks_pvalue(statistic: float, size: int) -> float:
    """Asymptotic Kolmogorov p-value of sqrt(size) * statistic."""
    return float(stats.kstwobign.sf(math.sqrt(size) * statistic))


def ks_critical_value(size: int, constant: float = 1.63) -> float:
    """Asymptotic critical value constant / sqrt(size) (1.63 is the 1% level)."""
    return constant / math.sqrt(size)


def standard_normal_ks(values) -> float:
    """K-S distance of a sample to the standard normal CDF."""
    return ks_statistic(np.sort(np.asarray(values, dtype=float)), stats.norm.cdf)


def summarize(values, quantiles=(0.5, 0.9)) -> dict:
    """
    Summary of a Monte Carlo statistic.

    Args:
        values: Per-replication values
        quantiles: Quantile levels to report

    Returns:
        Dictionary with count, mean, standard deviation and the quantiles
    """
    series = pd.Series(np.asarray(values, dtype=float))
    out = {
        "count": int(series.size),
        "mean": float(series.mean()),
        "std": float(series.std(ddof=1)) if series.size > 1 else 0.0,
    }
    for q in quantiles:
        out[f"q{int(round(q * 100))}"] = float(series.quantile(q))
    return out


def exceedance_frequency(flags) -> tuple:
    """
    Frequency of True flags and its binomial standard error.

    Returns:
        (frequency, standard error)
    """
    flags = np.asarray(flags, dtype=bool)
    p = float(flags.mean()) if flags.size else 0.0
    se = math.sqrt(p * (1.0 - p) / flags.size) if flags.size else 0.0
    return p, se


def max_abs_difference(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))
