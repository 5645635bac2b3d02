"""
Lynden-Bell product-limit estimation for truncation-limits.

Builds the empirical marginals F*_n and G*_n, the risk-set function C_n and
the product-limit estimator F_n from a truncated sample.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from errors import EmptySampleError
from sampler import TruncatedSample

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StepFunction:
    """
    Piecewise-constant function of the real line.

    `values[k]` holds on [breakpoints[k], breakpoints[k+1]). When
    `point_values` is given, the value exactly at breakpoint k is
    `point_values[k]` instead; C_n uses this to include Y_i in its own
    closed interval [T_i, Y_i].
    """

    breakpoints: np.ndarray
    values: np.ndarray
    value_before_first: float = 0.0
    point_values: Optional[np.ndarray] = None

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float).reshape(-1)
        vals = np.asarray(self.values, dtype=float).reshape(-1)
        if bp.shape != vals.shape:
            raise ValueError("breakpoints and values must have the same length")
        if bp.size > 1 and np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        if self.point_values is not None:
            pts = np.asarray(self.point_values, dtype=float).reshape(-1)
            if pts.shape != bp.shape:
                raise ValueError("point_values must match breakpoints")
            object.__setattr__(self, "point_values", pts)

    def __call__(self, x):
        return evaluate(self, x)

    @property
    def jumps(self) -> np.ndarray:
        """Size of the jump at each breakpoint (right value minus left limit)."""
        previous = np.concatenate([[self.value_before_first], self.values[:-1]])
        return self.values - previous

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x": self.breakpoints, "value": self.values})


def evaluate(step: StepFunction, x):
    """
    Evaluate a step function by binary search over its breakpoints.

    Args:
        step: Step function
        x: Point or array of points

    Returns:
        Value at x (right-continuous unless point values override)
    """
    xs = np.asarray(x, dtype=float)
    idx = np.searchsorted(step.breakpoints, xs, side="right") - 1
    safe = np.clip(idx, 0, max(step.values.size - 1, 0))
    if step.values.size:
        out = np.where(idx < 0, step.value_before_first, step.values[safe])
    else:
        out = np.full(xs.shape, step.value_before_first)
    if step.point_values is not None and step.values.size:
        at_break = (idx >= 0) & (step.breakpoints[safe] == xs)
        out = np.where(at_break, step.point_values[safe], out)
    return float(out) if out.ndim == 0 else out


def left_limit(step: StepFunction, x):
    """lim_{u -> x-} step(u)."""
    xs = np.asarray(x, dtype=float)
    idx = np.searchsorted(step.breakpoints, xs, side="left") - 1
    if step.values.size:
        safe = np.clip(idx, 0, step.values.size - 1)
        out = np.where(idx < 0, step.value_before_first, step.values[safe])
    else:
        out = np.full(xs.shape, step.value_before_first)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class LyndenBellFit:
    """Product-limit fit of a truncated sample plus the empirical ingredients."""

    f_n: StepFunction
    c_n: StepFunction
    f_star_n: StepFunction
    g_star_n: StepFunction
    n: int
    degenerate_points: tuple = ()
    ties: bool = False
    risk_sizes: np.ndarray = field(default_factory=lambda: np.empty(0))
    multiplicities: np.ndarray = field(default_factory=lambda: np.empty(0))

    def to_frame(self) -> pd.DataFrame:
        """One row per distinct observed y."""
        return pd.DataFrame({
            "y": self.f_n.breakpoints,
            "f_n": self.f_n.values,
            "risk_size": self.risk_sizes.astype(int),
            "multiplicity": self.multiplicities.astype(int),
        })


def _require_nonempty(sample: TruncatedSample) -> None:
    if sample.n == 0:
        raise EmptySampleError("sample has no observations")


def _ecdf(values: np.ndarray) -> StepFunction:
    points, counts = np.unique(values, return_counts=True)
    return StepFunction(points, np.cumsum(counts) / values.size, 0.0)


def empirical_marginals(sample: TruncatedSample) -> tuple:
    """Empirical distribution functions (f_star_n, g_star_n) of the observed Y and T."""
    _require_nonempty(sample)
    return _ecdf(sample.y), _ecdf(sample.t)


def c_n(sample: TruncatedSample) -> StepFunction:
    """
    Risk-set function C_n(y) = (1/n) * #{i : T_i <= y <= Y_i}.

    Args:
        sample: Truncated sample with n >= 1

    Returns:
        StepFunction with point values at each Y_i (the drop happens just after)
    """
    _require_nonempty(sample)
    n = sample.n
    t_sorted = np.sort(sample.t)
    y_sorted = np.sort(sample.y)
    points = np.unique(np.concatenate([sample.t, sample.y]))

    entered = np.searchsorted(t_sorted, points, side="right")
    left_through = np.searchsorted(y_sorted, points, side="right")
    left_before = np.searchsorted(y_sorted, points, side="left")

    values = (entered - left_through) / n
    at_point = (entered - left_before) / n
    return StepFunction(points, values, 0.0, point_values=at_point)


def fit(sample: TruncatedSample) -> LyndenBellFit:
    """
    Lynden-Bell product-limit estimator.

    F_n(y) = 1 - prod over distinct z_j <= y of (R_j - d_j) / R_j, where
    R_j = n*C_n(z_j) is the risk-set size and d_j the number of ties at z_j.
    The product is rearranged so that, when nothing is truncated, every
    ratio is exactly 1 and F_n reproduces the empirical CDF bit for bit.

    Args:
        sample: Truncated sample with n >= 1

    Returns:
        LyndenBellFit with F_n, C_n, the empirical marginals and diagnostics
    """
    _require_nonempty(sample)
    f_star_n, g_star_n = empirical_marginals(sample)
    risk = c_n(sample)

    z, d = np.unique(sample.y, return_counts=True)
    t_sorted = np.sort(sample.t)
    y_sorted = np.sort(sample.y)
    r_size = np.searchsorted(t_sorted, z, side="right") - np.searchsorted(y_sorted, z, side="left")
    survivors = np.maximum(r_size - d, 0)

    # P_j = prod_{k<j} survivors_k / R_{k+1}; each ratio is <= 1
    ratios = survivors[:-1] / r_size[1:]
    carried = np.concatenate([[1.0], np.cumprod(ratios)])
    f_values = (r_size[0] - carried * survivors) / r_size[0]
    f_values = np.maximum.accumulate(np.clip(f_values, 0.0, 1.0))

    interior = np.flatnonzero(survivors[:-1] == 0)
    degenerate = tuple(float(z[j]) for j in interior)
    if degenerate:
        logger.warning(
            "risk set exhausted before the largest observation at %d point(s); F_n reaches 1 at y=%g",
            len(degenerate), degenerate[0],
        )
    ties = bool(np.any(d > 1))
    if ties:
        logger.warning("sample contains %d tied y value(s); tie-grouped factors used", int(np.sum(d > 1)))

    return LyndenBellFit(
        f_n=StepFunction(z, f_values, 0.0),
        c_n=risk,
        f_star_n=f_star_n,
        g_star_n=g_star_n,
        n=sample.n,
        degenerate_points=degenerate,
        ties=ties,
        risk_sizes=r_size.astype(float),
        multiplicities=d.astype(float),
    )
