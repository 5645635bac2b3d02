"""
Influence functions and asymptotic covariance for truncation-limits.

For a function phi and the true model (F, G):

    psi(w)    = phi(w) (1 - F(w)) - integral_{(w, inf)} phi dF
    zeta(t,y) = psi(y)/C(y) - integral_t^y psi(u)/C(u)^2 dF*(u)

Vectorised evaluation works in the coordinate s = -log(1 - F(y)), where
dF(u)/(1 - F(u))^2 = e^s ds. With A(s) = psi/C and K(s) = integral_0^s A,

    zeta(t, y) = A(s_y) - K(s_y) + K(s_t)

and integrating by parts collapses the covariance of zeta(phi1), zeta(phi2)
under H* to two one-dimensional integrals:

    E[zeta1 zeta2] = alpha^-1 [ integral G(y(s)) B1 B2 e^-s ds
                               - integral K1 K2 e^-s_t dG(t) ],   B = A - K.

The scalar `psi` and `zeta` use plain quadrature in the original
coordinate and serve as a reference for the tables.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np

from empirical_process import w_n
from errors import AssumptionViolation, NearBoundarySingularity, NumericalFailure
from function_classes import Bracket, MeasurableFunction, d_metric
from lynden_bell import LyndenBellFit
from sampler import TruncatedSample, draw_fixed_n
from truncation_model import (
    IntegralProbe,
    TruncationModel,
    alpha,
    c_true,
    check_assumptions,
    expect,
    integrate,
    inverse_g_probe,
    probe_integral,
)

logger = logging.getLogger(__name__)

S_MAX = 36.0
UNIFORM_PANELS = 2048
C_FLOOR = 1e-12
MC_DRAWS = 10**6
CHUNK = 1 << 15

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class WeakConditionReport:
    """Convergence of the integrals of dF/G and phi^2/G dF."""

    holds: bool
    integrals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "integrals": {
                name: {"converged": p.converged, "value": p.value, "growth_ratio": p.growth_ratio}
                for name, p in self.integrals.items()
            },
        }


@dataclass(frozen=True)
class MomentResult:
    """A variance or covariance with the path that produced it."""

    value: float
    method: str
    error_estimate: Optional[float] = None


def check_weak_conditions(phi: MeasurableFunction, model: TruncationModel) -> WeakConditionReport:
    """
    Check that the integrals of dF/G and phi^2/G dF are finite.

    Divergence is detected by the growth of dyadic pieces toward the
    endpoints of the quantile range. It is reported, never raised.

    Args:
        phi: Function
        model: True model

    Returns:
        WeakConditionReport with one IntegralProbe per integral
    """
    f, g = model.f, model.g
    first = inverse_g_probe(model)

    if phi.constant == 0.0:
        second = IntegralProbe(name="phi^2/G dF", converged=True, value=0.0, growth_ratio=0.0)
    elif not first.converged and float(f.cdf(g.support_lo)) > 0.0:
        second = IntegralProbe(name="phi^2/G dF", converged=False, value=math.inf, growth_ratio=math.inf)
    else:

        def integrand(v):
            x = float(f.quantile(v))
            g_value = float(g.cdf(x))
            phi_sq = float(phi(x)) ** 2
            if phi_sq == 0.0:
                return 0.0
            return math.inf if g_value <= 0.0 else phi_sq / g_value

        second = probe_integral("phi^2/G dF", integrand, tol=model.tol)

    holds = bool(first.converged and second.converged and f.continuous and g.support_lo <= f.support_lo)
    return WeakConditionReport(holds=holds, integrals={"dF/G": first, "phi^2/G dF": second})


def _partial_gl(fn, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Gauss-Legendre integrals of a vectorised fn over [a_i, b_i]."""
    half = 0.5 * (b - a)
    nodes = (0.5 * (a + b))[:, None] + half[:, None] * _GL_NODES
    values = np.asarray(fn(nodes.ravel()), dtype=float).reshape(nodes.shape)
    return (values * _GL_WEIGHTS).sum(axis=1) * half


class SpaceTable:
    """
    Tables of A and K in the s coordinate for psi built from a head and a tail.

        psi(w) = head(w) (1 - F(w)) - integral_{(w, inf)} tail dF

    head = tail = phi gives the influence function of phi; mixing the two
    ends of a bracket gives the bounds used by ZetaBracket.
    """

    def __init__(self, model: TruncationModel, head: MeasurableFunction, tail: MeasurableFunction, extra_breaks=()):
        self.model = model
        self.head = head
        self.tail = tail
        self.alpha = alpha(model)
        breaks = set(head.breakpoints) | set(tail.breakpoints) | set(extra_breaks)
        breaks |= {model.g.support_lo, model.g.support_hi}
        self.grid = self._grid(breaks)
        self._build()

    def _grid(self, breaks) -> np.ndarray:
        f = self.model.f
        uniform = np.linspace(0.0, S_MAX, UNIFORM_PANELS + 1)
        near_zero = np.geomspace(1e-12, uniform[1], 40)
        s_breaks = []
        for b in breaks:
            if math.isfinite(b):
                tail = float(f.sf(b))
                if 0.0 < tail < 1.0:
                    s_breaks.append(-math.log(tail))
        self.s_breaks = tuple(sorted(s_breaks))
        return np.unique(np.concatenate([uniform, near_zero, np.asarray(s_breaks)]))

    def y_of(self, s: np.ndarray) -> np.ndarray:
        return np.asarray(self.model.f.isf(np.exp(-s)), dtype=float)

    def s_of(self, y: np.ndarray) -> np.ndarray:
        tail = np.asarray(self.model.f.sf(y), dtype=float)
        with np.errstate(divide="ignore"):
            return np.minimum(-np.log(tail), S_MAX) + 0.0

    def _tail_density(self, s: np.ndarray) -> np.ndarray:
        return self.tail(self.y_of(s)) * np.exp(-s)

    def _build(self) -> None:
        grid = self.grid
        a, b = grid[:-1], grid[1:]
        panels = _partial_gl(self._tail_density, a, b)
        beyond = float(self.tail(self.y_of(np.asarray(S_MAX)))) * math.exp(-S_MAX)
        # T(s) = integral over (y(s), inf) of tail dF
        self.t_nodes = beyond + np.concatenate([np.cumsum(panels[::-1])[::-1], [0.0]])

        k_panels = np.concatenate([_partial_gl(self.a_at, a[i:i + CHUNK // 8], b[i:i + CHUNK // 8])
                                   for i in range(0, a.size, CHUNK // 8)])
        self.k_nodes = np.concatenate([[0.0], np.cumsum(k_panels)])

    def _panel(self, s: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(self.grid, s, side="right") - 1, 0, self.grid.size - 2)

    def t_at(self, s) -> np.ndarray:
        shape = np.shape(s)
        s = np.minimum(np.asarray(s, dtype=float).reshape(-1), S_MAX)
        k = self._panel(s)
        out = self.t_nodes[k + 1] + _partial_gl(self._tail_density, s, self.grid[k + 1])
        return out.reshape(shape)

    def a_at(self, s, y=None) -> np.ndarray:
        """A(s) = psi(y(s)) / C(y(s)) = alpha (head(y) - e^s T(s)) / G(y)."""
        shape = np.shape(s)
        s = np.minimum(np.asarray(s, dtype=float).reshape(-1), S_MAX)
        y = self.y_of(s) if y is None else np.asarray(y, dtype=float).reshape(-1)
        conditional = np.exp(s) * self.t_at(s)
        g_value = np.asarray(self.model.g.cdf(y), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.alpha * (self.head(y) - conditional) / g_value
        return out.reshape(shape)

    def k_at(self, s) -> np.ndarray:
        """K(s) = integral from 0 to s of A."""
        shape = np.shape(s)
        flat_s = np.minimum(np.asarray(s, dtype=float).reshape(-1), S_MAX)
        out = np.empty(flat_s.size)
        for i in range(0, flat_s.size, CHUNK):
            chunk = flat_s[i:i + CHUNK]
            k = self._panel(chunk)
            out[i:i + CHUNK] = self.k_nodes[k] + _partial_gl(self.a_at, self.grid[k], chunk)
        return out.reshape(shape)

    def psi_at(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return self.head(w) * np.asarray(self.model.f.sf(w), dtype=float) - self.t_at(self.s_of(w))


def _guard_risk(model: TruncationModel, y: np.ndarray) -> None:
    """Raise NearBoundarySingularity where C(y) is below the floor."""
    c_values = np.asarray(c_true(model, y), dtype=float).reshape(-1)
    low = np.flatnonzero(c_values < C_FLOOR)
    if low.size:
        i = int(low[0])
        y_bad = float(np.asarray(y, dtype=float).reshape(-1)[i])
        raise NearBoundarySingularity(
            f"C(y)={c_values[i]:.3g} below {C_FLOOR:g} at y={y_bad!r}", y=y_bad, c_value=float(c_values[i])
        )


def _zeta_from_tables(
    model: TruncationModel,
    head_table: SpaceTable,
    kernel_table: SpaceTable,
    t,
    y,
) -> np.ndarray:
    """A_head(s_y) - K_kernel(s_y) + K_kernel(s_t)."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    _guard_risk(model, y)
    s_y = kernel_table.s_of(y)
    s_t = kernel_table.s_of(t)
    return head_table.a_at(s_y, y) - kernel_table.k_at(s_y) + kernel_table.k_at(s_t)


class InfluenceEvaluator:
    """
    psi and zeta for one function under one model.

    Construction fails with AssumptionViolation unless Assumption B or the
    weak conditions hold. The psi memo tolerates concurrent readers; a
    racing insert stores the same value.
    """

    def __init__(self, phi: MeasurableFunction, model: TruncationModel, tol: float = 1e-9, check: bool = True):
        self.phi = phi
        self.model = model
        self.tol = tol
        self.psi_cache: dict = {}
        if check:
            report = check_assumptions(model)
            if not report.b_holds:
                weak = check_weak_conditions(phi, model)
                if not weak.holds:
                    raise AssumptionViolation(
                        f"neither Assumption B nor the weak conditions hold for {phi.description}",
                        assumption="weak",
                    )

    @property
    def label(self) -> str:
        return self.phi.description

    @cached_property
    def table(self) -> SpaceTable:
        return SpaceTable(self.model, self.phi, self.phi)

    def psi_many(self, w) -> np.ndarray:
        if self.phi.constant is not None:
            return np.zeros(np.shape(w))
        return self.table.psi_at(w)

    def zeta_many(self, t, y) -> np.ndarray:
        if self.phi.constant is not None:
            _guard_risk(self.model, np.asarray(y, dtype=float))
            return np.zeros(np.shape(y))
        return _zeta_from_tables(self.model, self.table, self.table, t, y)


def psi(ev: InfluenceEvaluator, w: float) -> float:
    """
    psi(w) = phi(w)(1 - F(w)) - integral over (w, inf) of phi dF, by quadrature.

    Args:
        ev: Influence evaluator
        w: Point

    Returns:
        psi(w)
    """
    w = float(w)
    cached = ev.psi_cache.get(w)
    if cached is not None:
        return cached
    phi, f = ev.phi, ev.model.f
    if phi.constant is not None or float(f.sf(w)) <= 0.0:
        value = 0.0
    else:
        value = float(phi(w)) * float(f.sf(w)) - expect(phi, f, lo=w, tol=ev.tol, breakpoints=phi.breakpoints)
    ev.psi_cache[w] = value
    return value


def zeta(ev: InfluenceEvaluator, t: float, y: float) -> float:
    """
    Influence function zeta(t, y) by quadrature in the original coordinate.

    Args:
        ev: Influence evaluator
        t: Truncation value
        y: Observed value, y >= t

    Returns:
        zeta(t, y)

    Raises:
        NearBoundarySingularity: C(y) below 1e-12
    """
    t, y = float(t), float(y)
    if y < t:
        raise ValueError(f"zeta needs y >= t, got t={t}, y={y}")
    model = ev.model
    c_y = c_true(model, y)
    if c_y < C_FLOOR:
        raise NearBoundarySingularity(f"C(y)={c_y:.3g} below {C_FLOOR:g} at y={y!r}", y=y, c_value=c_y)
    head = psi(ev, y) / c_y
    if t == y or ev.phi.constant is not None:
        return head

    f, g = model.f, model.g
    a = alpha(model)
    v_lo, v_hi = float(f.cdf(t)), float(f.cdf(y))

    def integrand(v):
        u = float(f.quantile(v))
        # psi/C^2 against dF* = psi * alpha / (G (1 - F)^2) against dF
        return psi(ev, u) * a / (float(g.cdf(u)) * (1.0 - v) ** 2)

    points = [float(f.cdf(b)) for b in ev.phi.breakpoints + (g.support_lo, g.support_hi) if math.isfinite(b)]
    kernel = integrate(integrand, v_lo, v_hi, tol=1e-8, points=points)
    return head - kernel


def _check_shared_model(ev1: InfluenceEvaluator, ev2: InfluenceEvaluator) -> None:
    if ev1.model is not ev2.model and ev1.model.describe() != ev2.model.describe():
        raise ValueError("covariance needs evaluators built on the same model")


def _quadrature_moments(ev1: InfluenceEvaluator, ev2: InfluenceEvaluator) -> tuple:
    """E[zeta1 zeta2], E[zeta1], E[zeta2] and the summed error estimate."""
    model = ev1.model
    f, g = model.f, model.g
    a = alpha(model)
    t1, t2 = ev1.table, ev2.table
    s_points = sorted(set(t1.s_breaks) | set(t2.s_breaks))

    def b_value(table: SpaceTable, s: float) -> float:
        arr = np.asarray([s])
        return float(table.a_at(arr)[0] - table.k_at(arr)[0])

    def g_weight(s: float) -> float:
        return float(g.cdf(t1.y_of(np.asarray(s)))) * math.exp(-s)

    tol = 1e-7
    cross = integrate(lambda s: g_weight(s) * b_value(t1, s) * b_value(t2, s), 0.0, S_MAX, tol=tol, points=s_points, limit=400)
    mean1 = integrate(lambda s: g_weight(s) * b_value(t1, s), 0.0, S_MAX, tol=tol, points=s_points, limit=400)
    mean2 = mean1 if ev2 is ev1 else integrate(lambda s: g_weight(s) * b_value(t2, s), 0.0, S_MAX, tol=tol, points=s_points, limit=400)

    w_lo = float(g.cdf(f.support_lo))
    w_hi = float(g.cdf(f.support_hi)) if math.isfinite(f.support_hi) else 1.0
    kk = m1_t = m2_t = 0.0
    if w_hi > w_lo:

        def k_value(table: SpaceTable, w: float) -> tuple:
            s_t = float(table.s_of(np.asarray(g.quantile(w))))
            if s_t >= S_MAX:
                return 0.0, 0.0
            return float(table.k_at(np.asarray([s_t]))[0]), math.exp(-s_t)

        def kk_integrand(w):
            k1, decay = k_value(t1, w)
            k2, _ = k_value(t2, w)
            return k1 * k2 * decay

        w_points = [float(g.cdf(b)) for b in ev1.phi.breakpoints + ev2.phi.breakpoints if math.isfinite(b)]
        kk = integrate(kk_integrand, w_lo, w_hi, tol=tol, points=w_points, limit=400)
        m1_t = integrate(lambda w: math.prod(k_value(t1, w)), w_lo, w_hi, tol=tol, points=w_points, limit=400)
        m2_t = m1_t if ev2 is ev1 else integrate(lambda w: math.prod(k_value(t2, w)), w_lo, w_hi, tol=tol, points=w_points, limit=400)

    second = (cross - kk) / a
    return second, (mean1 + m1_t) / a, (mean2 + m2_t) / a, 6 * tol / a


def zeta_moments_mc(evs: list, draws: int = MC_DRAWS, seed: int = 0) -> tuple:
    """
    Monte Carlo mean vector and covariance matrix of zeta over H* draws.

    Args:
        evs: Influence evaluators on one model
        draws: Number of H* draws
        seed: Seed of the draws

    Returns:
        (means, covariance matrix, standard errors of the means)
    """
    sample = draw_fixed_n(evs[0].model, draws, seed)
    values = np.vstack([ev.zeta_many(sample.t, sample.y) for ev in evs])
    means = values.mean(axis=1)
    cov = np.atleast_2d(np.cov(values, ddof=1))
    stderr = values.std(axis=1, ddof=1) / math.sqrt(draws)
    return means, cov, stderr


def covariance(ev1: InfluenceEvaluator, ev2: InfluenceEvaluator, mc_seed: int = 0) -> MomentResult:
    """
    Cov(zeta(phi1), zeta(phi2)) under H*.

    Quadrature first; on NumericalFailure a Monte Carlo estimate from 10^6
    draws is used instead and the path is recorded.

    Args:
        ev1: Evaluator of phi1
        ev2: Evaluator of phi2 (same model)
        mc_seed: Seed for the fallback

    Returns:
        MomentResult
    """
    _check_shared_model(ev1, ev2)
    if ev1.phi.constant is not None or ev2.phi.constant is not None:
        return MomentResult(value=0.0, method="exact", error_estimate=0.0)
    try:
        second, mean1, mean2, err = _quadrature_moments(ev1, ev2)
        return MomentResult(value=second - mean1 * mean2, method="quadrature", error_estimate=err)
    except NumericalFailure as exc:
        logger.warning("quadrature covariance failed (%s); falling back to Monte Carlo", exc)
    try:
        _, cov, _ = zeta_moments_mc([ev1, ev2], seed=mc_seed)
    except (NumericalFailure, NearBoundarySingularity) as exc:
        raise NumericalFailure(f"covariance failed by quadrature and Monte Carlo: {exc}", error_estimate=None) from exc
    return MomentResult(value=float(cov[0, 1]), method="monte_carlo", error_estimate=float(math.sqrt(abs(cov[0, 0] * cov[1, 1]) / MC_DRAWS)))


def sigma2(ev: InfluenceEvaluator, mc_seed: int = 0) -> MomentResult:
    """
    Asymptotic variance Var(zeta(phi)) of sqrt(n) * integral of phi d(F_n - F).

    Args:
        ev: Influence evaluator
        mc_seed: Seed for the Monte Carlo fallback

    Returns:
        MomentResult with a nonnegative value
    """
    result = covariance(ev, ev, mc_seed=mc_seed)
    return MomentResult(value=max(result.value, 0.0), method=result.method, error_estimate=result.error_estimate)


def zeta_mean(ev: InfluenceEvaluator) -> float:
    """E[zeta(phi)] under H* by quadrature; zero up to quadrature error."""
    if ev.phi.constant is not None:
        return 0.0
    _, mean, _, _ = _quadrature_moments(ev, ev)
    return mean


def covariance_matrix(evs: list, mc_seed: int = 0) -> tuple:
    """
    Theoretical covariance matrix of (zeta(phi_1), ..., zeta(phi_k)).

    Returns:
        (k x k array, list of methods per entry)
    """
    k = len(evs)
    out = np.zeros((k, k))
    methods = []
    for i in range(k):
        for j in range(i, k):
            result = covariance(evs[i], evs[j], mc_seed=mc_seed)
            out[i, j] = out[j, i] = result.value
            methods.append(result.method)
    return out, methods


@dataclass
class ZetaBracket:
    """Pointwise bounds g^l <= zeta(phi) <= g^u for every phi in a bracket."""

    bracket: Bracket
    model: TruncationModel

    def __post_init__(self):
        lo, up = self.bracket.lower, self.bracket.upper
        self.breaks = tuple(set(lo.breakpoints) | set(up.breakpoints))
        self.lower_head = SpaceTable(self.model, lo, up, self.breaks)
        self.upper_head = SpaceTable(self.model, up, lo, self.breaks)

    def lower(self, t, y) -> np.ndarray:
        # psi bounded below with l in the head and u in the tail; the kernel
        # enters with a minus sign so it takes the upper psi bound
        return _zeta_from_tables(self.model, self.lower_head, self.upper_head, t, y)

    def upper(self, t, y) -> np.ndarray:
        return _zeta_from_tables(self.model, self.upper_head, self.lower_head, t, y)

    def zeta_of(self, phi: MeasurableFunction, t, y) -> np.ndarray:
        """zeta(phi) on the bracket's grid."""
        table = SpaceTable(self.model, phi, phi, self.breaks)
        return _zeta_from_tables(self.model, table, table, t, y)

    def violations(self, phi: MeasurableFunction, t, y, tol: float = 1e-9) -> int:
        """Number of points where zeta(phi) escapes [g^l, g^u] by more than tol."""
        values = self.zeta_of(phi, t, y)
        return int(np.sum(values < self.lower(t, y) - tol) + np.sum(values > self.upper(t, y) + tol))


def zeta_bracket(bracket: Bracket, model: TruncationModel) -> ZetaBracket:
    """
    Transfer a bracket [l, u] on phi to a bracket [g^l, g^u] on zeta(phi).

    Args:
        bracket: Bracket of F-square-integrable functions
        model: True model

    Returns:
        ZetaBracket
    """
    return ZetaBracket(bracket, model)


def bracket_transfer_ratio(
    bracket: Bracket,
    model: TruncationModel,
    draws: int = 20_000,
    seed: int = 0,
    zb: Optional[ZetaBracket] = None,
) -> float:
    """
    d(g^l, g^u) / d(l, u): L^2(H*) width of the zeta bracket over the L^2(F) width.

    The H* norm is estimated on a fixed seeded draw so ratios are comparable
    across brackets.
    """
    zb = zb or zeta_bracket(bracket, model)
    sample = draw_fixed_n(model, draws, seed)
    width = zb.upper(sample.t, sample.y) - zb.lower(sample.t, sample.y)
    d_zeta = math.sqrt(float(np.mean(width**2)))
    d_phi = d_metric(bracket.lower, bracket.upper, model.f)
    if d_phi == 0.0:
        return 0.0
    return d_zeta / d_phi


def decomposition_remainder(sample: TruncatedSample, fit: LyndenBellFit, ev: InfluenceEvaluator) -> float:
    """G_n(phi) - n^(-1/2) sum_i zeta(T_i, Y_i): the non-i.i.d. remainder."""
    g_n = math.sqrt(fit.n) * w_n(fit, ev.phi, ev.model)
    linear = float(np.sum(ev.zeta_many(sample.t, sample.y))) / math.sqrt(fit.n)
    return g_n - linear
