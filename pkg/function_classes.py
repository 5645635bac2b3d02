"""
Function classes and bracket covers for truncation-limits.

A class exposes an envelope, a way to sample members and a constructive
epsilon-bracket cover in L^p(F). Three classes are built in:

    - IndicatorClass: {phi0 * 1(-inf, t] : t real}
    - LipschitzClass: L-Lipschitz functions on [lo, hi] bounded by B,
      extended by constants outside the interval
    - FiniteClass: an explicit list of functions

Cover sizes are upper bounds on the bracketing number, not minima.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid
from scipy.optimize import brentq

from errors import CoverBudgetError, NumericalFailure
from truncation_model import ContinuousDistribution, expect, integrate

logger = logging.getLogger(__name__)

DEFAULT_COVER_BUDGET = 10**8
ENTROPY_FLOOR = 1e-3
CHECK_POINTS = 1000


@dataclass(frozen=True, eq=False)
class MeasurableFunction:
    """Vectorised real function with a label and its known kink/jump points."""

    eval: Callable
    description: str
    breakpoints: tuple = ()
    constant: Optional[float] = None
    params: tuple = ()

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.eval(x), dtype=float)
        if out.shape != x.shape:
            out = np.broadcast_to(out, x.shape).copy()
        return float(out) if out.ndim == 0 else out

    def __repr__(self) -> str:
        return f"MeasurableFunction({self.description})"


def constant(c: float) -> MeasurableFunction:
    c = float(c)
    return MeasurableFunction(lambda x: np.full(np.shape(x), c), f"constant({c:g})", constant=c)


def zero() -> MeasurableFunction:
    return constant(0.0)


def identity() -> MeasurableFunction:
    return MeasurableFunction(lambda x: np.asarray(x, dtype=float), "identity")


def indicator(s: float) -> MeasurableFunction:
    """1(-inf, s]."""
    s = float(s)
    return MeasurableFunction(
        lambda x: np.where(np.asarray(x) <= s, 1.0, 0.0),
        f"indicator({s:g})",
        breakpoints=(s,),
        params=(s,),
    )


def lipschitz(slope: float, center: float = 0.0) -> MeasurableFunction:
    """Clipped ramp clip(slope * (x - center), -1, 1)."""
    slope, center = float(slope), float(center)
    if slope == 0:
        return constant(0.0)
    half = 1.0 / abs(slope)
    return MeasurableFunction(
        lambda x: np.clip(slope * (np.asarray(x, dtype=float) - center), -1.0, 1.0),
        f"lipschitz({slope:g}, {center:g})",
        breakpoints=(center - half, center + half),
        params=(slope, center),
    )


def scaled_indicator(phi0: MeasurableFunction, t: float) -> MeasurableFunction:
    """phi0 * 1(-inf, t]."""
    t = float(t)
    if phi0.constant is not None and phi0.constant == 1.0:
        return indicator(t)
    return MeasurableFunction(
        lambda x: np.where(np.asarray(x) <= t, phi0(x), 0.0),
        f"{phi0.description}*indicator({t:g})",
        breakpoints=tuple(phi0.breakpoints) + (t,),
        params=(t,),
    )


def piecewise_linear(xs, ys, description: str = "piecewise_linear") -> MeasurableFunction:
    """Linear interpolation through (xs, ys), constant outside [xs[0], xs[-1]]."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    return MeasurableFunction(
        lambda x: np.interp(np.asarray(x, dtype=float), xs, ys),
        description,
        breakpoints=tuple(xs.tolist()),
        params=(xs, ys),
    )


def step(edges, levels, description: str = "step") -> MeasurableFunction:
    """
    Piecewise constant function: levels[i] on [edges[i-1], edges[i]).

    Args:
        edges: Increasing cell boundaries (k values)
        levels: Cell values (k + 1 values, the first on (-inf, edges[0]))
        description: Label
    """
    edges = np.asarray(edges, dtype=float)
    levels = np.asarray(levels, dtype=float)
    return MeasurableFunction(
        lambda x: levels[np.searchsorted(edges, np.asarray(x, dtype=float), side="right")],
        description,
        breakpoints=tuple(edges.tolist()),
    )


def combine(a: float, f: MeasurableFunction, b: float, g: MeasurableFunction) -> MeasurableFunction:
    """a*f + b*g."""
    const = None
    if f.constant is not None and g.constant is not None:
        const = a * f.constant + b * g.constant
    return MeasurableFunction(
        lambda x: a * f(x) + b * g(x),
        f"{a:g}*{f.description} + {b:g}*{g.description}",
        breakpoints=tuple(sorted(set(f.breakpoints) | set(g.breakpoints))),
        constant=const,
    )


def absolute(f: MeasurableFunction) -> MeasurableFunction:
    const = abs(f.constant) if f.constant is not None else None
    return MeasurableFunction(lambda x: np.abs(f(x)), f"|{f.description}|", f.breakpoints, constant=const)


def _check_grid(base: ContinuousDistribution, extra: Sequence[float] = ()) -> np.ndarray:
    """Quantile-spaced points in the interior of the support plus given points."""
    v = (np.arange(CHECK_POINTS) + 0.5) / CHECK_POINTS
    pts = np.concatenate([np.asarray(base.quantile(v), dtype=float), np.asarray(extra, dtype=float)])
    return np.unique(pts[np.isfinite(pts)])


@dataclass(frozen=True, eq=False)
class Bracket:
    """The set of functions phi with lower <= phi <= upper."""

    lower: MeasurableFunction
    upper: MeasurableFunction

    def check(self, grid: np.ndarray, tol: float = 1e-12) -> None:
        """Raise ValueError if lower exceeds upper somewhere on the grid."""
        gap = self.upper(grid) - self.lower(grid)
        if np.any(gap < -tol):
            worst = int(np.argmin(gap))
            raise ValueError(f"bracket lower exceeds upper at x={grid[worst]!r}")

    def contains(self, phi: MeasurableFunction, grid: np.ndarray, tol: float = 1e-9) -> bool:
        values = phi(grid)
        return bool(np.all(self.lower(grid) <= values + tol) and np.all(values <= self.upper(grid) + tol))

    @property
    def breakpoints(self) -> tuple:
        return tuple(sorted(set(self.lower.breakpoints) | set(self.upper.breakpoints)))


def bracket_norm(bracket: Bracket, p: int, base: ContinuousDistribution, tol: float = 1e-10) -> float:
    """||upper - lower||_p under base."""
    def gap(x):
        return np.abs(bracket.upper(x) - bracket.lower(x)) ** p

    return expect(gap, base, tol=tol, breakpoints=bracket.breakpoints) ** (1.0 / p)


class BracketCover:
    """
    Finite epsilon-bracket cover of a class in L^p(base).

    Subclasses provide `bracket(index)` and `locate(member)`; `size` is an
    exact Python int and may be astronomically large for lazy covers.
    """

    materialize_limit = 100_000

    def __init__(self, epsilon: float, p: int, base: ContinuousDistribution, size: int):
        self.epsilon = epsilon
        self.p = p
        self.base = base
        self.size = size

    def bracket(self, index: int) -> Bracket:
        raise NotImplementedError

    def locate(self, member: MeasurableFunction) -> int:
        raise NotImplementedError

    @property
    def log_size(self) -> float:
        return math.log(self.size)

    @property
    def brackets(self) -> list:
        if self.size > self.materialize_limit:
            raise CoverBudgetError(
                f"cover of size {self.size} is too large to list", epsilon=self.epsilon
            )
        return [self.bracket(i) for i in range(self.size)]

    def summary(self) -> dict:
        return {"epsilon": self.epsilon, "p": self.p, "size": str(self.size), "log_size": self.log_size}


class FunctionClass:
    """Base class for function classes with constructive bracket covers."""

    name = "class"

    @property
    def envelope(self) -> MeasurableFunction:
        raise NotImplementedError

    def sample_members(self, count: int, rng: np.random.Generator, base: ContinuousDistribution) -> list:
        raise NotImplementedError

    def cover(self, epsilon: float, p: int, base: ContinuousDistribution, budget: int = DEFAULT_COVER_BUDGET) -> BracketCover:
        raise NotImplementedError

    def log_cover_size(self, epsilon: float, p: int, base: ContinuousDistribution, budget: int = DEFAULT_COVER_BUDGET) -> float:
        return self.cover(epsilon, p, base, budget).log_size

    def describe(self) -> dict:
        return {"kind": self.name}


# ----------------------------------------------------------------------------
# Indicator class
# ----------------------------------------------------------------------------


class IndicatorCover(BracketCover):
    """Brackets [phi0 1(-inf,t_k] + min(phi0,0) 1(t_k,t_{k+1}], same with max]."""

    def __init__(self, phi0: MeasurableFunction, cuts: np.ndarray, epsilon: float, p: int, base: ContinuousDistribution):
        super().__init__(epsilon, p, base, size=len(cuts) - 1)
        self.phi0 = phi0
        self.cuts = cuts

    def _piece(self, k: int, clip: Callable, label: str) -> MeasurableFunction:
        t_k, t_next = self.cuts[k], self.cuts[k + 1]
        phi0 = self.phi0

        def fn(x):
            x = np.asarray(x, dtype=float)
            value = phi0(x)
            head = np.where(x <= t_k, value, 0.0)
            cell = np.where((x > t_k) & (x <= t_next), clip(value, 0.0), 0.0)
            return head + cell

        edges = tuple(c for c in (t_k, t_next) if math.isfinite(c))
        return MeasurableFunction(fn, f"{label}[{k}]", breakpoints=tuple(phi0.breakpoints) + edges)

    def bracket(self, index: int) -> Bracket:
        return Bracket(self._piece(index, np.minimum, "lower"), self._piece(index, np.maximum, "upper"))

    def locate(self, member: MeasurableFunction) -> int:
        (t,) = member.params[:1]
        k = int(np.searchsorted(self.cuts[1:-1], t, side="left"))
        return min(k, self.size - 1)

    def summary(self) -> dict:
        out = super().summary()
        out["cuts"] = [float(c) for c in self.cuts[1:-1]]
        return out


class IndicatorClass(FunctionClass):
    """{phi0 * 1(-inf, t] : t real} for an F-integrable phi0."""

    name = "indicator"

    def __init__(self, phi0: Optional[MeasurableFunction] = None):
        self.phi0 = phi0 if phi0 is not None else constant(1.0)

    @property
    def envelope(self) -> MeasurableFunction:
        return absolute(self.phi0)

    def member(self, t: float) -> MeasurableFunction:
        return scaled_indicator(self.phi0, t)

    def sample_members(self, count, rng, base):
        ts = np.asarray(base.quantile(rng.random(count)), dtype=float)
        return [self.member(t) for t in ts]

    def _mass(self, p: int, base: ContinuousDistribution) -> Callable:
        """v -> integral over (0, v) of |phi0(F^-1)|^p."""
        phi0 = self.phi0
        points = [float(base.cdf(b)) for b in phi0.breakpoints if math.isfinite(b)]

        def mass(v):
            if v <= 0.0:
                return 0.0
            return integrate(lambda w: abs(phi0(base.quantile(w))) ** p, 0.0, v, tol=1e-11, points=points)

        return mass

    def _total_mass(self, p: int, base: ContinuousDistribution) -> float:
        if self.phi0.constant is not None:
            return abs(self.phi0.constant) ** p
        try:
            return self._mass(p, base)(1.0)
        except NumericalFailure as exc:
            raise NumericalFailure(
                f"{self.phi0.description} is not L^{p}-integrable under {base.name}: {exc}",
                error_estimate=exc.error_estimate,
            ) from exc

    def _count(self, epsilon: float, p: int, total: float) -> int:
        return max(1, math.ceil(total / epsilon**p - 1e-9))

    def log_cover_size(self, epsilon, p, base, budget=DEFAULT_COVER_BUDGET):
        count = self._count(epsilon, p, self._total_mass(p, base))
        if count > budget:
            raise CoverBudgetError(f"indicator cover needs {count} brackets at epsilon={epsilon:g}", epsilon=epsilon)
        return math.log(count)

    def cover(self, epsilon, p, base, budget=DEFAULT_COVER_BUDGET):
        """
        Cut the line where the running L^p mass of phi0 crosses equal steps.

        Args:
            epsilon: Bracket size
            p: Norm order (1 or 2)
            base: Distribution defining the norm
            budget: Maximum number of brackets

        Returns:
            IndicatorCover with cut points t_0 = -inf < ... < t_K = +inf
        """
        total = self._total_mass(p, base)
        count = self._count(epsilon, p, total)
        if count > budget:
            raise CoverBudgetError(f"indicator cover needs {count} brackets at epsilon={epsilon:g}", epsilon=epsilon)

        if self.phi0.constant is not None:
            v_cuts = np.arange(1, count) / count
        else:
            mass = self._mass(p, base)
            v_cuts = np.empty(count - 1)
            v_prev = 0.0
            for k in range(1, count):
                target = total * k / count
                v_prev = brentq(lambda v: mass(v) - target, v_prev, 1.0, xtol=1e-14)
                v_cuts[k - 1] = v_prev

        interior = np.asarray(base.quantile(v_cuts), dtype=float)
        cuts = np.concatenate([[-math.inf], interior, [math.inf]])
        logger.debug("indicator cover: %d brackets at epsilon=%g, p=%d", count, epsilon, p)
        return IndicatorCover(self.phi0, cuts, epsilon, p, base)

    def describe(self) -> dict:
        return {"kind": self.name, "phi0": self.phi0.description}


# ----------------------------------------------------------------------------
# Bounded Lipschitz class
# ----------------------------------------------------------------------------


def grid_shape(lo: float, hi: float, lipschitz: float, bound: float, epsilon: float) -> dict:
    """Node spacing, level range and step bound of the Lipschitz grid cover."""
    eta = epsilon / 2.0
    h = epsilon / (4.0 * lipschitz) if lipschitz > 0 else hi - lo
    return {
        "eta": eta,
        "h": h,
        "nodes": max(1, math.ceil((hi - lo) / h - 1e-12)) + 1,
        "level_lo": math.floor(-bound / eta),
        "level_hi": math.floor(bound / eta),
        "max_step": math.floor(lipschitz * h / eta) + 1,
    }


class GridCover(BracketCover):
    """
    Sup-norm grid cover of a bounded Lipschitz class.

    Nodes x_0 = lo < ... < x_m = hi are spaced at most h = eps/(4L) apart
    and levels are multiples of eta = eps/2. A path (a_0, ..., a_m) of
    levels with bounded steps indexes one bracket, constant on each cell
    [x_i, x_{i+1}):

        lower = max(a_i - L h, -B),  upper = min(a_i + eta + L h, B)

    Cell 0 extends to -inf and the last node's cell to +inf. The width
    eta + 2 L h = eps in sup norm, so the L^p gap is at most eps.
    """

    def __init__(self, lo, hi, lipschitz, bound, epsilon, p, base):
        self.lo, self.hi, self.lipschitz, self.bound = lo, hi, lipschitz, bound
        shape = grid_shape(lo, hi, lipschitz, bound, epsilon)
        self.eta, self.h = shape["eta"], shape["h"]
        self.nodes = np.minimum(lo + self.h * np.arange(shape["nodes"]), hi)
        self.level_lo, self.level_hi = shape["level_lo"], shape["level_hi"]
        self.n_levels = self.level_hi - self.level_lo + 1
        self.max_step = shape["max_step"]
        self.radix = 2 * self.max_step + 1
        steps = len(self.nodes) - 1
        super().__init__(epsilon, p, base, size=self.n_levels * self.radix**steps)
        self.slack = lipschitz * self.h

    @property
    def log_size(self) -> float:
        return math.log(self.n_levels) + (len(self.nodes) - 1) * math.log(self.radix)

    def level_values(self) -> tuple:
        """Lower and upper bracket values for every level index."""
        a = self.eta * np.arange(self.level_lo, self.level_hi + 1)
        lower = np.maximum(a - self.slack, -self.bound)
        upper = np.minimum(a + self.eta + self.slack, self.bound)
        return lower, upper

    def cell_index(self, x) -> np.ndarray:
        return np.searchsorted(self.nodes[1:], np.asarray(x, dtype=float), side="right")

    def path_to_index(self, levels: np.ndarray) -> int:
        levels = [int(v) for v in levels]
        index = levels[0] - self.level_lo
        scale = self.n_levels
        for prev, cur in zip(levels[:-1], levels[1:]):
            index += (cur - prev + self.max_step) * scale
            scale *= self.radix
        return index

    def index_to_path(self, index: int) -> np.ndarray:
        index = int(index)
        path = [index % self.n_levels + self.level_lo]
        index //= self.n_levels
        for _ in range(len(self.nodes) - 1):
            step_ = index % self.radix - self.max_step
            index //= self.radix
            path.append(min(max(path[-1] + step_, self.level_lo), self.level_hi))
        return np.asarray(path)

    def bracket_from_path(self, path: np.ndarray) -> Bracket:
        lower_vals, upper_vals = self.level_values()
        idx = np.asarray(path) - self.level_lo
        edges = self.nodes[1:]
        return Bracket(
            step(edges, lower_vals[idx], "grid lower"),
            step(edges, upper_vals[idx], "grid upper"),
        )

    def bracket(self, index: int) -> Bracket:
        return self.bracket_from_path(self.index_to_path(index))

    def path_of(self, member: MeasurableFunction) -> np.ndarray:
        values = np.clip(member(self.nodes), -self.bound, self.bound)
        return np.clip(np.floor(values / self.eta).astype(int), self.level_lo, self.level_hi)

    def locate(self, member: MeasurableFunction) -> int:
        return self.path_to_index(self.path_of(member))

    def summary(self) -> dict:
        out = super().summary()
        out.update({"nodes": len(self.nodes), "levels": self.n_levels, "max_step": self.max_step})
        return out


class LipschitzClass(FunctionClass):
    """L-Lipschitz functions on [lo, hi] bounded by B, constant outside."""

    name = "lipschitz"

    def __init__(self, lo: float = 0.0, hi: float = 1.0, lipschitz: float = 1.0, bound: float = 1.0, knots: int = 9):
        if not (hi > lo and lipschitz >= 0 and bound > 0):
            raise ValueError("lipschitz class needs hi > lo, L >= 0 and B > 0")
        self.lo, self.hi, self.lipschitz, self.bound = lo, hi, lipschitz, bound
        self.knots = knots

    @property
    def envelope(self) -> MeasurableFunction:
        return constant(self.bound)

    def sample_members(self, count, rng, base=None):
        """Random clipped piecewise linear members with slopes within L."""
        xs = np.linspace(self.lo, self.hi, self.knots)
        dx = np.diff(xs)
        members = []
        for k in range(count):
            ys = np.empty(self.knots)
            ys[0] = rng.uniform(-self.bound, self.bound)
            for i, width in enumerate(dx):
                ys[i + 1] = np.clip(ys[i] + rng.uniform(-1, 1) * self.lipschitz * width, -self.bound, self.bound)
            members.append(piecewise_linear(xs, ys, f"lipschitz member {k}"))
        return members

    def _shape(self, epsilon: float, budget: int) -> dict:
        shape = grid_shape(self.lo, self.hi, self.lipschitz, self.bound, epsilon)
        levels = shape["level_hi"] - shape["level_lo"] + 1
        if shape["nodes"] * levels > budget:
            raise CoverBudgetError(
                f"grid cover needs {shape['nodes']} nodes x {levels} levels at epsilon={epsilon:g}",
                epsilon=epsilon,
            )
        return shape

    def log_cover_size(self, epsilon, p, base, budget=DEFAULT_COVER_BUDGET):
        shape = self._shape(epsilon, budget)
        levels = shape["level_hi"] - shape["level_lo"] + 1
        return math.log(levels) + (shape["nodes"] - 1) * math.log(2 * shape["max_step"] + 1)

    def cover(self, epsilon, p, base, budget=DEFAULT_COVER_BUDGET):
        self._shape(epsilon, budget)
        return GridCover(self.lo, self.hi, self.lipschitz, self.bound, epsilon, p, base)

    def describe(self) -> dict:
        return {"kind": self.name, "lo": self.lo, "hi": self.hi, "lipschitz": self.lipschitz, "bound": self.bound}


# ----------------------------------------------------------------------------
# Finite class
# ----------------------------------------------------------------------------


class FiniteCover(BracketCover):
    """Degenerate brackets [phi, phi], one per member."""

    def __init__(self, members: list, epsilon, p, base):
        super().__init__(epsilon, p, base, size=len(members))
        self.members = members

    @property
    def log_size(self) -> float:
        return math.log(self.size) if self.size else 0.0

    def bracket(self, index: int) -> Bracket:
        phi = self.members[index]
        return Bracket(phi, phi)

    def locate(self, member: MeasurableFunction) -> int:
        for i, phi in enumerate(self.members):
            if phi is member or phi.description == member.description:
                return i
        raise ValueError(f"{member.description} is not a member of the finite class")


class FiniteClass(FunctionClass):
    """An explicit list of functions."""

    name = "finite"

    def __init__(self, members: Sequence[MeasurableFunction]):
        if not members:
            raise ValueError("finite class needs at least one member")
        self.members = list(members)

    @property
    def envelope(self) -> MeasurableFunction:
        members = self.members
        return MeasurableFunction(
            lambda x: np.max([np.abs(phi(x)) for phi in members], axis=0),
            "max|phi|",
            breakpoints=tuple(sorted({b for phi in members for b in phi.breakpoints})),
        )

    def sample_members(self, count, rng, base=None):
        return [self.members[i] for i in rng.integers(0, len(self.members), size=count)]

    def log_cover_size(self, epsilon, p, base, budget=DEFAULT_COVER_BUDGET):
        return math.log(len(self.members))

    def cover(self, epsilon, p, base, budget=DEFAULT_COVER_BUDGET):
        if len(self.members) > budget:
            raise CoverBudgetError(f"finite class of {len(self.members)} members exceeds the budget", epsilon=epsilon)
        return FiniteCover(self.members, epsilon, p, base)

    def describe(self) -> dict:
        return {"kind": self.name, "members": [phi.description for phi in self.members]}


# ----------------------------------------------------------------------------
# Operations
# ----------------------------------------------------------------------------


def bracket_cover(
    cls: FunctionClass,
    epsilon: float,
    p: int,
    base: ContinuousDistribution,
    budget: int = DEFAULT_COVER_BUDGET,
    validate: bool = True,
) -> BracketCover:
    """
    Build an epsilon-bracket cover of a class in L^p(base).

    Args:
        cls: Function class
        epsilon: Bracket size, > 0
        p: Norm order, 1 or 2
        base: Distribution defining the norm
        budget: Construction size budget
        validate: Spot-check lower <= upper on a quantile grid for listed brackets

    Returns:
        BracketCover

    Raises:
        CoverBudgetError: cover exceeds the budget
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if p not in (1, 2):
        raise ValueError(f"p must be 1 or 2, got {p}")

    cover = cls.cover(epsilon, p, base, budget)
    if validate and cover.size <= 1000:
        grid = _check_grid(base)
        for bracket in cover.brackets:
            bracket.check(np.union1d(grid, [b for b in bracket.breakpoints if math.isfinite(b)]))
    return cover


def entropy_grid(delta: float, floor: float = ENTROPY_FLOOR) -> np.ndarray:
    """Geometric grid delta, delta/2, ... down to the floor (included)."""
    if delta <= floor:
        return np.asarray([floor])
    steps = int(math.floor(math.log2(delta / floor)))
    grid = delta / 2.0 ** np.arange(steps + 1)
    if grid[-1] > floor:
        grid = np.append(grid, floor)
    return grid


def entropy_integral(
    cls: FunctionClass,
    delta: float,
    p: int,
    base: ContinuousDistribution,
    floor: float = ENTROPY_FLOOR,
    budget: int = DEFAULT_COVER_BUDGET,
) -> float:
    """
    Bracketing entropy integral J(delta) = integral over (0, delta] of sqrt(log N(eps)).

    Trapezoid rule on a halving grid from delta down to the floor; the
    contribution of (0, floor] is left out.

    Args:
        cls: Function class
        delta: Upper limit in (0, 1]
        p: Norm order
        base: Distribution defining the norm
        floor: Smallest grid epsilon
        budget: Cover budget per grid point

    Returns:
        Finite approximation of J(delta)

    Raises:
        CoverBudgetError: budget exceeded; carries the integral over the part of the grid already done
    """
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if delta <= floor:
        return 0.0

    grid = entropy_grid(delta, floor)
    heights = []
    for k, eps in enumerate(grid):
        try:
            heights.append(math.sqrt(max(cls.log_cover_size(float(eps), p, base, budget), 0.0)))
        except CoverBudgetError as exc:
            partial = float(trapezoid(heights[::-1], grid[:k][::-1])) if k > 1 else 0.0
            raise CoverBudgetError(
                f"entropy integral stopped at epsilon={eps:g}: {exc}", epsilon=float(eps), partial_integral=partial
            ) from exc
    return float(trapezoid(heights[::-1], grid[::-1]))


def d_metric(phi1: MeasurableFunction, phi2: MeasurableFunction, base: ContinuousDistribution, tol: float = 1e-10) -> float:
    """
    L^2(base) distance [integral of (phi1 - phi2)^2 dF]^(1/2).

    Raises:
        NumericalFailure: the integral diverges
    """
    if phi1 is phi2:
        return 0.0
    points = tuple(phi1.breakpoints) + tuple(phi2.breakpoints)
    value = expect(lambda x: (phi1(x) - phi2(x)) ** 2, base, tol=tol, breakpoints=points)
    return math.sqrt(max(value, 0.0))


def envelope_square_integral(cls: FunctionClass, base: ContinuousDistribution, tol: float = 1e-9) -> float:
    """Integral of the squared envelope; raises NumericalFailure when it diverges."""
    env = cls.envelope
    return expect(lambda x: env(x) ** 2, base, tol=tol, breakpoints=env.breakpoints)
