"""
Class-indexed empirical process for truncation-limits.

W_n(phi) = integral of phi d(F_n - F) and G_n(phi) = sqrt(n) W_n(phi). The
F_n side is always an exact sum over the jumps of the Lynden-Bell fit; only
the F side uses quadrature.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from function_classes import (
    FiniteCover,
    FunctionClass,
    GridCover,
    IndicatorCover,
    MeasurableFunction,
    bracket_cover,
)
from lynden_bell import LyndenBellFit, left_limit
from truncation_model import TruncationModel, cumulative_expectation, expect

logger = logging.getLogger(__name__)

SIGN_SCAN_POINTS = 2048


@dataclass(frozen=True)
class ProcessEvaluation:
    """W_n and G_n for one function."""

    phi_label: str
    w_n: float
    g_n: float
    n: int


@dataclass(frozen=True)
class SupBound:
    """Certified upper bound on sup |W_n| over a class at bracket size epsilon."""

    upper_bound: float
    witness_index: int
    witness_side: str
    epsilon: float
    cover_size: int

    def to_dict(self) -> dict:
        return {
            "upper_bound": self.upper_bound,
            "witness_index": str(self.witness_index),
            "witness_side": self.witness_side,
            "epsilon": self.epsilon,
            "cover_size": str(self.cover_size),
        }


def integrate_against_fit(fit: LyndenBellFit, phi: MeasurableFunction) -> float:
    """
    Integral of phi against the Lynden-Bell estimator, summed over its jumps.

    Args:
        fit: Lynden-Bell fit
        phi: Function to integrate

    Returns:
        Sum of phi(y_j) * (F_n(y_j) - F_n(y_j-))
    """
    step_fn = fit.f_n
    if phi.constant is not None:
        return phi.constant * float(step_fn.values[-1])
    return float(np.dot(phi(step_fn.breakpoints), step_fn.jumps))


def f_side_integral(phi: MeasurableFunction, model: TruncationModel) -> float:
    """Integral of phi dF under the true model."""
    if phi.constant is not None:
        return phi.constant
    return expect(phi, model.f, tol=model.tol, breakpoints=phi.breakpoints)


def w_n(fit: LyndenBellFit, phi: MeasurableFunction, model: TruncationModel) -> float:
    """
    Centered integral W_n(phi) = integral of phi d(F_n - F).

    Args:
        fit: Lynden-Bell fit
        phi: Function, integrable under F
        model: True model

    Returns:
        W_n(phi)
    """
    return integrate_against_fit(fit, phi) - f_side_integral(phi, model)


def evaluate_process(fit: LyndenBellFit, phi: MeasurableFunction, model: TruncationModel) -> ProcessEvaluation:
    value = w_n(fit, phi, model)
    return ProcessEvaluation(phi_label=phi.description, w_n=value, g_n=math.sqrt(fit.n) * value, n=fit.n)


def _sign_changes(phi0: MeasurableFunction, model: TruncationModel) -> list:
    """Points where phi0 changes sign, located on a quantile scan and refined."""
    v = (np.arange(SIGN_SCAN_POINTS) + 0.5) / SIGN_SCAN_POINTS
    xs = np.asarray(model.f.quantile(v), dtype=float)
    values = phi0(xs)
    signs = np.sign(values)
    # roots that land on the scan itself
    roots = [float(x) for x in xs[values == 0.0]]
    for k in np.flatnonzero(signs[:-1] * signs[1:] < 0):
        a, b = float(xs[k]), float(xs[k + 1])
        if a < b:
            roots.append(brentq(lambda x: float(phi0(x)), a, b, xtol=1e-13))
    return roots


def _cumulative_pair(fit: LyndenBellFit, phi0: MeasurableFunction, model: TruncationModel, x: np.ndarray) -> tuple:
    """
    Running integrals of phi0 against F_n (right value and left limit) and F at sorted x.
    """
    z = fit.f_n.breakpoints
    weights = phi0(z) * fit.f_n.jumps
    running = np.concatenate([[0.0], np.cumsum(weights)])
    a_right = running[np.searchsorted(z, x, side="right")]
    a_left = running[np.searchsorted(z, x, side="left")]
    b = cumulative_expectation(phi0, model.f, x, breakpoints=phi0.breakpoints)
    return a_right, a_left, b, running[-1]


def exact_sup_indicator(fit: LyndenBellFit, phi0: MeasurableFunction, model: TruncationModel) -> float:
    """
    Exact sup over t of |integral_{-inf}^{t} phi0 d(F_n - F)|.

    Between jumps of F_n the F_n part is constant and the F part moves
    monotonically wherever phi0 keeps its sign, so the supremum is attained
    at a jump (right value or left limit), at a sign change or jump of phi0,
    or in the limits t -> +-inf.

    Args:
        fit: Lynden-Bell fit
        phi0: F-integrable weight
        model: True model

    Returns:
        Supremum, >= 0
    """
    z = fit.f_n.breakpoints

    if phi0.constant is not None:
        c = phi0.constant
        if c == 0.0:
            return 0.0
        f_at = model.f.cdf(z)
        right = fit.f_n.values
        left = np.concatenate([[fit.f_n.value_before_first], right[:-1]])
        gaps = np.maximum(np.abs(right - f_at), np.abs(left - f_at))
        tail = abs(float(right[-1]) - 1.0)
        return abs(c) * max(float(gaps.max()), tail)

    extra = [b for b in phi0.breakpoints if math.isfinite(b)] + _sign_changes(phi0, model)
    x = np.unique(np.concatenate([z, np.asarray(extra, dtype=float)]))
    a_right, a_left, b, a_total = _cumulative_pair(fit, phi0, model, x)
    b_total = f_side_integral(phi0, model)
    best = max(float(np.max(np.abs(a_right - b))), float(np.max(np.abs(a_left - b))))
    return max(best, abs(a_total - b_total))


def _indicator_endpoints(fit: LyndenBellFit, cover: IndicatorCover, model: TruncationModel) -> tuple:
    """Integrals of every lower and upper bracket endpoint against F_n - F."""
    phi0 = cover.phi0
    inner = cover.cuts[1:-1]

    def running(fn: MeasurableFunction) -> np.ndarray:
        """D(t) at every cut, with D(-inf) = 0 and D(+inf) the total."""
        a_right, _, b, a_total = _cumulative_pair(fit, fn, model, inner)
        total = a_total - f_side_integral(fn, model)
        return np.concatenate([[0.0], a_right - b, [total]])

    def part(clip) -> MeasurableFunction:
        return MeasurableFunction(lambda x: clip(phi0(x), 0.0), "part", breakpoints=phi0.breakpoints)

    head = running(phi0)
    neg = running(part(np.minimum))
    pos = running(part(np.maximum))
    lower = head[:-1] + neg[1:] - neg[:-1]
    upper = head[:-1] + pos[1:] - pos[:-1]
    return lower, upper


def _grid_weights(fit: LyndenBellFit, cover: GridCover, model: TruncationModel) -> np.ndarray:
    """(F_n - F) mass of each grid cell, cells half-open on the right."""
    edges = cover.nodes[1:]
    fn_mass = np.diff(np.concatenate([[0.0], left_limit(fit.f_n, edges), [fit.f_n.values[-1]]]))
    f_mass = np.diff(np.concatenate([[0.0], model.f.cdf(edges), [1.0]]))
    return fn_mass - f_mass


def _grid_extreme(weights: np.ndarray, values: np.ndarray, max_step: int, sign: float) -> tuple:
    # best (score, level path) for sign * sum_i weights[i] * values[path[i]], steps <= max_step
    n_levels = values.size
    score = sign * weights[0] * values
    back = np.empty((weights.size - 1, n_levels), dtype=np.int64)
    offsets = np.arange(n_levels)
    for i in range(1, weights.size):
        best = np.full(n_levels, -np.inf)
        arg = offsets.copy()
        for k in range(-max_step, max_step + 1):
            src = offsets - k
            ok = (src >= 0) & (src < n_levels)
            cand = np.full(n_levels, -np.inf)
            cand[ok] = score[src[ok]]
            better = cand > best
            best[better] = cand[better]
            arg[better] = src[better]
        back[i - 1] = arg
        score = best + sign * weights[i] * values
    end = int(np.argmax(score))
    path = [end]
    for i in range(weights.size - 2, -1, -1):
        path.append(int(back[i, path[-1]]))
    return float(score[end]), np.asarray(path[::-1])


def _grid_sup(fit: LyndenBellFit, cover: GridCover, model: TruncationModel) -> tuple:
    weights = _grid_weights(fit, cover, model)
    lower_vals, upper_vals = cover.level_values()
    best = (-1.0, 0, "upper")
    for side, vals in (("lower", lower_vals), ("upper", upper_vals)):
        for sign in (1.0, -1.0):
            score, path = _grid_extreme(weights, vals, cover.max_step, sign)
            if score > best[0]:
                best = (score, cover.path_to_index(path + cover.level_lo), side)
    return best


def sup_over_class(
    fit: LyndenBellFit,
    cls: FunctionClass,
    model: TruncationModel,
    epsilon: float,
) -> SupBound:
    """
    Certified upper bound on sup over the class of |W_n(phi)|.

    Every member phi lies in some L^1(F) bracket [l, u] of size epsilon, so
    |W_n(phi)| <= max(|W_n(l)|, |W_n(u)|) + epsilon.

    Args:
        fit: Lynden-Bell fit
        cls: Function class
        model: True model (F is the base measure)
        epsilon: Bracket size

    Returns:
        SupBound with the attaining bracket index and side
    """
    cover = bracket_cover(cls, epsilon, 1, model.f, validate=False)

    if isinstance(cover, IndicatorCover):
        lower, upper = _indicator_endpoints(fit, cover, model)
        best_value, best_index, best_side = _pick(lower, upper)
    elif isinstance(cover, GridCover):
        best_value, best_index, best_side = _grid_sup(fit, cover, model)
    elif isinstance(cover, FiniteCover):
        values = np.asarray([w_n(fit, phi, model) for phi in cover.members])
        best_value, best_index, best_side = _pick(values, values)
    else:
        lower = np.asarray([w_n(fit, b.lower, model) for b in cover.brackets])
        upper = np.asarray([w_n(fit, b.upper, model) for b in cover.brackets])
        best_value, best_index, best_side = _pick(lower, upper)

    return SupBound(
        upper_bound=best_value + epsilon,
        witness_index=best_index,
        witness_side=best_side,
        epsilon=epsilon,
        cover_size=cover.size,
    )


def _pick(lower: np.ndarray, upper: np.ndarray) -> tuple:
    lo_abs, up_abs = np.abs(lower), np.abs(upper)
    i_lo, i_up = int(np.argmax(lo_abs)), int(np.argmax(up_abs))
    if up_abs[i_up] >= lo_abs[i_lo]:
        return float(up_abs[i_up]), i_up, "upper"
    return float(lo_abs[i_lo]), i_lo, "lower"


def max_over_finite(fit: LyndenBellFit, members, model: TruncationModel) -> float:
    """Exact sup |W_n| over an explicit list of functions."""
    return max(abs(w_n(fit, phi, model)) for phi in members)


def grid_sup_indicator(fit: LyndenBellFit, phi0: MeasurableFunction, model: TruncationModel, points: int = 10_000) -> float:
    """Brute-force sup over quantile-spaced t, a check on exact_sup_indicator."""
    v = (np.arange(points) + 0.5) / points
    ts = np.asarray(model.f.quantile(v), dtype=float)
    a_right, _, b, _ = _cumulative_pair(fit, phi0, model, ts)
    return float(np.max(np.abs(a_right - b)))

