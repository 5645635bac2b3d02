"""
Random left truncation model for truncation-limits.

Holds the data-generating pair (F, G) and computes the population quantities
of the observable law: alpha, F*, G*, H*, the risk function C and the
assumption checks. Every integral against dF or dG is taken in the quantile
coordinate v = F(u), so infinite supports need no special handling.

Atoms are not supported for F: left limits F(y-) are taken equal to F(y).
The model fixes (Y, T) notation; (X, Y) in older write-ups aliases it.
"""

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy.integrate import IntegrationWarning, quad

from errors import NumericalFailure

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
GAUSS_ORDER = 16

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_ORDER)


@dataclass(frozen=True)
class ContinuousDistribution:
    """Closed-form distribution with support bounds.

    All callables are vectorised over numpy arrays. `sf` and `isf` are kept
    next to `cdf` and `quantile` so upper-tail quantities stay accurate.
    """

    name: str
    params: dict
    cdf: Callable
    sf: Callable
    pdf: Callable
    quantile: Callable
    isf: Callable
    support_lo: float
    support_hi: float
    continuous: bool = True

    def describe(self) -> dict:
        return {"family": self.name, **self.params}


def uniform(lo: float = 0.0, hi: float = 1.0) -> ContinuousDistribution:
    """Uniform distribution on [lo, hi]."""
    if not hi > lo:
        raise ValueError(f"uniform requires hi > lo, got lo={lo}, hi={hi}")
    width = hi - lo

    def cdf(x):
        return np.clip((np.asarray(x, dtype=float) - lo) / width, 0.0, 1.0)

    def sf(x):
        return np.clip((hi - np.asarray(x, dtype=float)) / width, 0.0, 1.0)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= lo) & (x <= hi), 1.0 / width, 0.0)

    def quantile(q):
        return lo + np.asarray(q, dtype=float) * width

    def isf(q):
        return hi - np.asarray(q, dtype=float) * width

    return ContinuousDistribution(
        name="uniform",
        params={"lo": lo, "hi": hi},
        cdf=cdf,
        sf=sf,
        pdf=pdf,
        quantile=quantile,
        isf=isf,
        support_lo=lo,
        support_hi=hi,
    )


def exponential(rate: float = 1.0, loc: float = 0.0) -> ContinuousDistribution:
    """Exponential distribution with the given rate, shifted to start at loc."""
    if not rate > 0:
        raise ValueError(f"exponential requires rate > 0, got {rate}")

    def _z(x):
        return np.maximum(np.asarray(x, dtype=float) - loc, 0.0)

    def cdf(x):
        return -np.expm1(-rate * _z(x))

    def sf(x):
        return np.exp(-rate * _z(x))

    def pdf(x):
        x = np.asarray(x, dtype=float)
        return np.where(x >= loc, rate * np.exp(-rate * _z(x)), 0.0)

    def quantile(q):
        return loc - np.log1p(-np.asarray(q, dtype=float)) / rate

    def isf(q):
        return loc - np.log(np.asarray(q, dtype=float)) / rate

    return ContinuousDistribution(
        name="exponential",
        params={"rate": rate, "loc": loc},
        cdf=cdf,
        sf=sf,
        pdf=pdf,
        quantile=quantile,
        isf=isf,
        support_lo=loc,
        support_hi=math.inf,
    )


def weibull(shape: float, scale: float = 1.0, loc: float = 0.0) -> ContinuousDistribution:
    """Weibull distribution with shape k and scale lambda, shifted by loc."""
    if not (shape > 0 and scale > 0):
        raise ValueError(f"weibull requires shape > 0 and scale > 0, got {shape}, {scale}")

    def _z(x):
        return np.maximum(np.asarray(x, dtype=float) - loc, 0.0) / scale

    def cdf(x):
        return -np.expm1(-_z(x) ** shape)

    def sf(x):
        return np.exp(-_z(x) ** shape)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        z = _z(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            density = shape / scale * z ** (shape - 1.0) * np.exp(-z ** shape)
        return np.where(x > loc, density, 0.0)

    def quantile(q):
        return loc + scale * (-np.log1p(-np.asarray(q, dtype=float))) ** (1.0 / shape)

    def isf(q):
        return loc + scale * (-np.log(np.asarray(q, dtype=float))) ** (1.0 / shape)

    return ContinuousDistribution(
        name="weibull",
        params={"shape": shape, "scale": scale, "loc": loc},
        cdf=cdf,
        sf=sf,
        pdf=pdf,
        quantile=quantile,
        isf=isf,
        support_lo=loc,
        support_hi=math.inf,
    )


def point_mass(at: float) -> ContinuousDistribution:
    """Degenerate distribution at a single point.

    Only meaningful in the truncation role, e.g. T placed below a_F so that
    nothing is ever truncated. Flagged as not continuous.
    """

    def cdf(x):
        return np.where(np.asarray(x, dtype=float) >= at, 1.0, 0.0)

    def sf(x):
        return np.where(np.asarray(x, dtype=float) >= at, 0.0, 1.0)

    def pdf(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def quantile(q):
        return np.full_like(np.asarray(q, dtype=float), at)

    return ContinuousDistribution(
        name="point",
        params={"at": at},
        cdf=cdf,
        sf=sf,
        pdf=pdf,
        quantile=quantile,
        isf=quantile,
        support_lo=at,
        support_hi=at,
        continuous=False,
    )


def piecewise_linear(knots: Iterable) -> ContinuousDistribution:
    """Distribution whose CDF interpolates linearly between (x, F(x)) knots.

    Args:
        knots: Sequence of (x, F) pairs, x strictly increasing, F strictly
            increasing from 0 to 1.

    Returns:
        ContinuousDistribution with piecewise-constant density
    """
    pts = np.asarray(list(knots), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise ValueError("piecewise_linear needs at least two (x, F) knots")
    xs, fs = pts[:, 0], pts[:, 1]
    if np.any(np.diff(xs) <= 0) or np.any(np.diff(fs) <= 0):
        raise ValueError("piecewise_linear knots must be strictly increasing in x and F")
    if fs[0] != 0.0 or fs[-1] != 1.0:
        raise ValueError("piecewise_linear CDF must run from 0 to 1")
    slopes = np.diff(fs) / np.diff(xs)

    def cdf(x):
        return np.interp(np.asarray(x, dtype=float), xs, fs, left=0.0, right=1.0)

    def sf(x):
        return 1.0 - cdf(x)

    def pdf(x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(slopes) - 1)
        return np.where((x >= xs[0]) & (x < xs[-1]), slopes[idx], 0.0)

    def quantile(q):
        return np.interp(np.asarray(q, dtype=float), fs, xs)

    def isf(q):
        return quantile(1.0 - np.asarray(q, dtype=float))

    return ContinuousDistribution(
        name="piecewise_linear",
        params={"knots": pts.tolist()},
        cdf=cdf,
        sf=sf,
        pdf=pdf,
        quantile=quantile,
        isf=isf,
        support_lo=float(xs[0]),
        support_hi=float(xs[-1]),
    )


def integrate(
    fn: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = DEFAULT_TOL,
    points: Optional[Iterable[float]] = None,
    limit: int = 200,
    rel_tol: float = 1e-10,
) -> float:
    """
    Adaptive Gauss-Kronrod quadrature of fn over [lo, hi].

    Args:
        fn: Integrand, finite on (lo, hi) except possibly at the endpoints
        lo: Lower limit (may be -inf)
        hi: Upper limit (may be +inf)
        tol: Absolute error target
        points: Interior points where fn has kinks or jumps
        limit: Subinterval budget for the adaptive refinement
        rel_tol: Relative error target, accepted as an alternative to tol

    Returns:
        Value of the integral

    Raises:
        NumericalFailure: refinement budget exhausted or non-finite result
    """
    if lo == hi:
        return 0.0
    if lo > hi:
        return -integrate(fn, hi, lo, tol, points, limit, rel_tol)

    kwargs = {"epsabs": tol, "epsrel": rel_tol, "limit": limit}
    if points is not None and math.isfinite(lo) and math.isfinite(hi):
        inner = sorted({float(p) for p in points if lo < p < hi})
        if inner:
            kwargs["points"] = inner
            kwargs["limit"] = max(limit, 2 * len(inner) + 50)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", IntegrationWarning)
        value, abserr = quad(lambda x: float(fn(x)), lo, hi, **kwargs)

    problems = [w for w in caught if issubclass(w.category, IntegrationWarning)]
    if problems or not math.isfinite(value) or abserr > max(tol, rel_tol * abs(value)):
        detail = str(problems[0].message).splitlines()[0] if problems else "tolerance not met"
        raise NumericalFailure(
            f"quadrature over [{lo}, {hi}] failed: {detail} (error estimate {abserr:.3g})",
            error_estimate=abserr,
        )
    return float(value)


def expect(
    fn: Callable,
    dist: ContinuousDistribution,
    lo: float = -math.inf,
    hi: float = math.inf,
    tol: float = DEFAULT_TOL,
    breakpoints: Iterable[float] = (),
) -> float:
    """
    Integral of fn against dist over (lo, hi], via the quantile substitution.

    Args:
        fn: Function of the real line
        dist: Integrating distribution
        lo: Lower limit
        hi: Upper limit
        tol: Absolute error target
        breakpoints: Points in x where fn jumps or kinks

    Returns:
        Value of the integral
    """
    v_lo = float(dist.cdf(lo)) if math.isfinite(lo) else 0.0
    v_hi = float(dist.cdf(hi)) if math.isfinite(hi) else 1.0
    if v_hi <= v_lo:
        return 0.0
    points = [float(dist.cdf(b)) for b in breakpoints if math.isfinite(b)]
    return integrate(lambda v: fn(dist.quantile(v)), v_lo, v_hi, tol=tol, points=points)


def cumulative_expectation(
    fn: Callable,
    dist: ContinuousDistribution,
    x: np.ndarray,
    breakpoints: Iterable[float] = (),
) -> np.ndarray:
    """
    Running integrals of fn against dist from -inf up to each sorted x.

    Uses composite Gauss-Legendre in the quantile coordinate with the
    breakpoints of fn as knots, so each panel sees a smooth integrand.

    Args:
        fn: Vectorised function of the real line
        dist: Integrating distribution
        x: Nondecreasing evaluation points
        breakpoints: Points in x where fn jumps or kinks

    Returns:
        Array of the same length as x
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return np.zeros(0)
    v_x = np.asarray(dist.cdf(x), dtype=float)
    extra = np.asarray([dist.cdf(b) for b in breakpoints if math.isfinite(b)], dtype=float)
    knots = np.unique(np.concatenate([[0.0], v_x, extra]))
    a, b = knots[:-1], knots[1:]
    half = 0.5 * (b - a)
    nodes = half[:, None] * _GL_NODES + (0.5 * (a + b))[:, None]
    values = np.asarray(fn(dist.quantile(nodes)), dtype=float)
    panels = (values * _GL_WEIGHTS).sum(axis=1) * half
    running = np.concatenate([[0.0], np.cumsum(panels)])
    return running[np.searchsorted(knots, v_x)]


@dataclass(frozen=True)
class IntegralProbe:
    """Outcome of a divergence-aware integral over the quantile range (0, 1)."""

    name: str
    converged: bool
    value: float
    growth_ratio: float


def probe_integral(
    name: str,
    fn_v: Callable[[float], float],
    levels: int = 45,
    tol: float = DEFAULT_TOL,
) -> IntegralProbe:
    """
    Integrate a nonnegative function of v over (0, 1) and detect divergence.

    The range is cut into dyadic pieces shrinking toward both endpoints. A
    convergent integral has piece contributions that vanish geometrically; a
    divergent one keeps a roughly constant (or growing) contribution per
    halving.

    Args:
        name: Label carried into the result
        fn_v: Nonnegative integrand in the quantile coordinate
        levels: Number of halvings toward each endpoint
        tol: Absolute error target per piece

    Returns:
        IntegralProbe with the partial value and the per-halving growth ratio
    """
    def piece(lo: float, hi: float) -> float:
        try:
            return abs(integrate(fn_v, lo, hi, tol=tol))
        except NumericalFailure:
            return math.inf

    middle = piece(0.25, 0.75)
    lower = [piece(2.0 ** -(k + 3), 2.0 ** -(k + 2)) for k in range(levels)]
    upper = [piece(1.0 - 2.0 ** -(k + 2), 1.0 - 2.0 ** -(k + 3)) for k in range(levels)]
    total = middle + sum(lower) + sum(upper)

    if not math.isfinite(total):
        return IntegralProbe(name=name, converged=False, value=math.inf, growth_ratio=math.inf)

    span = min(10, levels - 1)
    worst = 0.0
    converged = True
    for increments in (lower, upper):
        last, earlier = increments[-1], increments[-1 - span]
        if last <= 1e-12 * max(1.0, total) or earlier == 0.0:
            continue
        ratio = (last / earlier) ** (1.0 / span)
        worst = max(worst, ratio)
        if ratio > 0.9:
            converged = False

    if not converged:
        logger.warning("integral %s appears divergent (growth ratio %.3f per halving)", name, worst)
    return IntegralProbe(name=name, converged=converged, value=total, growth_ratio=worst)


@dataclass(frozen=True)
class AssumptionReport:
    """Which of the model assumptions hold."""

    a_holds: bool
    b_holds: bool
    weak_holds: bool
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TruncationModel:
    """The pair (F, G): Y has law F and is observed only when Y >= T ~ G."""

    f: ContinuousDistribution
    g: ContinuousDistribution
    tol: float = DEFAULT_TOL
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def alpha_cache(self) -> Optional[float]:
        return self._cache.get("alpha")

    def kinks_in_f(self) -> list:
        """Quantile coordinates of F where G has a kink (its support edges)."""
        return [float(self.f.cdf(b)) for b in (self.g.support_lo, self.g.support_hi) if math.isfinite(b)]

    def kinks_in_g(self) -> list:
        """Quantile coordinates of G where F has a kink (its support edges)."""
        return [float(self.g.cdf(b)) for b in (self.f.support_lo, self.f.support_hi) if math.isfinite(b)]

    def describe(self) -> dict:
        return {"f": self.f.describe(), "g": self.g.describe()}


def alpha(model: TruncationModel) -> float:
    """
    Observation probability alpha = P(Y >= T) = integral of G dF.

    The value is cached on the model; racing writers store the same number.

    Args:
        model: Truncation model

    Returns:
        alpha in (0, 1]
    """
    cached = model.alpha_cache
    if cached is not None:
        return cached

    if float(model.g.cdf(model.f.support_lo)) >= 1.0:
        value = 1.0
    else:
        value = _f_side_mass(model, 1.0)
        value = min(max(value, 0.0), 1.0)

    if value <= 0.0:
        raise NumericalFailure("alpha evaluates to 0: Y >= T has probability zero", error_estimate=None)

    model._cache["alpha"] = value
    logger.debug("alpha=%.12g for %s", value, model.describe())
    return value


def _f_side_mass(model: TruncationModel, v_hi: float, t: float = math.inf) -> float:
    """Integral over v in (0, v_hi) of G(min(t, F^-1(v)))."""
    g, f = model.g, model.f
    if t == -math.inf:
        return 0.0
    points = model.kinks_in_f()
    if math.isfinite(t):
        points.append(float(f.cdf(t)))

        def integrand(v):
            return g.cdf(min(t, float(f.quantile(v))))
    else:

        def integrand(v):
            return g.cdf(f.quantile(v))

    return integrate(integrand, 0.0, v_hi, tol=model.tol, points=points)


def f_star(model: TruncationModel, y: float) -> float:
    """
    Observable marginal law of Y: F*(y) = alpha^-1 * integral_{-inf}^{y} G dF.

    Args:
        model: Truncation model
        y: Evaluation point

    Returns:
        F*(y) in [0, 1]
    """
    v_hi = float(model.f.cdf(y))
    if v_hi <= 0.0:
        return 0.0
    if v_hi >= 1.0:
        return 1.0
    return min(1.0, _f_side_mass(model, v_hi) / alpha(model))


def g_star(model: TruncationModel, t: float) -> float:
    """Observable marginal law of T: G*(t) = alpha^-1 * integral_{-inf}^{t} (1 - F) dG."""
    w_hi = float(model.g.cdf(t))
    if w_hi <= 0.0:
        return 0.0
    if w_hi >= 1.0:
        return 1.0
    f, g = model.f, model.g

    def integrand(w):
        return f.sf(g.quantile(w))

    mass = integrate(integrand, 0.0, w_hi, tol=model.tol, points=model.kinks_in_g())
    return min(1.0, mass / alpha(model))


def h_star(model: TruncationModel, y: float, t: float) -> float:
    """
    Observable joint law H*(y, t) = alpha^-1 * integral_{-inf}^{y} G(t ^ u) dF(u).

    Args:
        model: Truncation model
        y: Bound on Y
        t: Bound on T

    Returns:
        H*(y, t) in [0, 1]
    """
    if t == -math.inf:
        return 0.0
    if t == math.inf:
        return f_star(model, y)
    v_hi = float(model.f.cdf(y))
    if v_hi <= 0.0:
        return 0.0
    return min(1.0, _f_side_mass(model, v_hi, t=t) / alpha(model))


def c_true(model: TruncationModel, y):
    """
    Population risk function C(y) = alpha^-1 * G(y) * (1 - F(y)).

    Vectorised; zero outside (a_G, b_F).

    Args:
        model: Truncation model
        y: Point or array of points

    Returns:
        C(y), same shape as y
    """
    value = model.g.cdf(y) * model.f.sf(y) / alpha(model)
    return float(value) if np.ndim(value) == 0 else value


def inverse_g_probe(model: TruncationModel) -> IntegralProbe:
    """Divergence-aware evaluation of the integral of dF / G."""
    f, g = model.f, model.g
    if float(f.cdf(g.support_lo)) > 0.0:
        # G vanishes on a set of positive F-mass.
        return IntegralProbe(name="dF/G", converged=False, value=math.inf, growth_ratio=math.inf)

    def integrand(v):
        g_value = float(g.cdf(f.quantile(v)))
        return math.inf if g_value <= 0.0 else 1.0 / g_value

    return probe_integral("dF/G", integrand, tol=model.tol)


def check_assumptions(model: TruncationModel) -> AssumptionReport:
    """
    Evaluate Assumption A, Assumption B and the weak conditions.

    A: F and G continuous with a_G < b_F.
    B: F continuous with a_G < a_F.
    weak: a_G <= a_F, F continuous, and the integral of dF/G finite.

    Args:
        model: Truncation model

    Returns:
        AssumptionReport with the three flags and the support bounds used
    """
    a_f, b_f = model.f.support_lo, model.f.support_hi
    a_g, b_g = model.g.support_lo, model.g.support_hi
    f_cont, g_cont = model.f.continuous, model.g.continuous

    a_holds = bool(f_cont and g_cont and a_g < b_f)
    b_holds = bool(f_cont and a_g < a_f)

    diagnostics = {
        "a_F": a_f,
        "b_F": b_f,
        "a_G": a_g,
        "b_G": b_g,
        "f_continuous": f_cont,
        "g_continuous": g_cont,
    }
    if b_holds:
        weak_holds = True
    elif f_cont and a_g <= a_f:
        probe = inverse_g_probe(model)
        diagnostics["dF/G"] = {"converged": probe.converged, "value": probe.value}
        weak_holds = probe.converged
    else:
        weak_holds = False

    return AssumptionReport(a_holds=a_holds, b_holds=b_holds, weak_holds=weak_holds, diagnostics=diagnostics)
