"""
Monte Carlo experiments for truncation-limits.

Each experiment draws independent replications, seeds every replication
from (master_seed, n, replication index), runs them through joblib in
order-preserving fashion and reduces the per-replication statistics into an
ExperimentReport with a PASS/FAIL verdict.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from empirical_process import (
    exact_sup_indicator,
    f_side_integral,
    integrate_against_fit,
    max_over_finite,
    sup_over_class,
)
from errors import AssumptionViolation, ConfigError, DegenerateCoordinateError, SamplingBudgetError
from function_classes import FiniteClass, FunctionClass, IndicatorClass, MeasurableFunction, d_metric
from influence_clt import (
    InfluenceEvaluator,
    check_weak_conditions,
    covariance_matrix,
    decomposition_remainder,
    sigma2,
)
from lynden_bell import fit
from metrics import exceedance_frequency, ks_critical_value, standard_normal_ks, summarize
from sampler import RNG_NAME, derive_seed, draw_fixed_n, draw_fixed_population
from truncation_model import TruncationModel, alpha, check_assumptions

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLDS = {
    "lln_contraction": 0.5,
    "ks_critical": 1.63,
    "covariance_tolerance": 0.1,
    "continuity_se": 2.0,
}


@dataclass(frozen=True)
class LLNConfig:
    """Uniform LLN experiment over a grid of sample sizes."""

    model: TruncationModel
    function_class: FunctionClass
    n_grid: tuple
    replications: int = 200
    epsilon_scale: float = 1.0
    epsilon_power: float = 0.25
    master_seed: int = 0
    n_jobs: int = 1
    sampling: str = "fixed_n"
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))

    def epsilon(self, n: int) -> float:
        return self.epsilon_scale * n ** (-self.epsilon_power)

    def describe(self) -> dict:
        return {
            "model": self.model.describe(),
            "class": self.function_class.describe(),
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "epsilon_rule": {"scale": self.epsilon_scale, "power": self.epsilon_power},
            "seed": self.master_seed,
            "sampling": self.sampling,
        }


@dataclass(frozen=True)
class CLTConfig:
    """Uniform CLT experiment for a finite list of functions."""

    model: TruncationModel
    phis: tuple
    n: int = 1000
    replications: int = 1000
    master_seed: int = 0
    delta_grid: tuple = (0.4, 0.2, 0.1)
    epsilon0: float = 0.25
    n_jobs: int = 1
    sampling: str = "fixed_n"
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))

    def describe(self) -> dict:
        return {
            "model": self.model.describe(),
            "phis": [phi.description for phi in self.phis],
            "n": self.n,
            "replications": self.replications,
            "delta_grid": list(self.delta_grid),
            "epsilon0": self.epsilon0,
            "seed": self.master_seed,
            "sampling": self.sampling,
        }


@dataclass
class ExperimentReport:
    """Per-replication statistics, their summary and the verdict."""

    kind: str
    config: dict
    thresholds: dict
    passed: bool
    summary: pd.DataFrame
    replications: pd.DataFrame
    statistics: dict = field(default_factory=dict)
    insights: list = field(default_factory=list)
    wall_time: float = 0.0

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def validate_lln(config: LLNConfig) -> None:
    report = check_assumptions(config.model)
    if not report.a_holds:
        raise AssumptionViolation("Assumption A fails: need F, G continuous and a_G < b_F", assumption="A")


def validate_clt(config: CLTConfig) -> None:
    report = check_assumptions(config.model)
    if not report.b_holds:
        raise AssumptionViolation("Assumption B fails: need F continuous and a_G < a_F", assumption="B")
    for phi in config.phis:
        weak = check_weak_conditions(phi, config.model)
        if not weak.holds:
            raise AssumptionViolation(f"weak conditions fail for {phi.description}", assumption="weak")


def _draw(model: TruncationModel, n: int, seed: int, sampling: str, replication: int):
    try:
        if sampling == "fixed_population":
            sample = draw_fixed_population(model, n, seed)
            if sample.n == 0:
                raise SamplingBudgetError(
                    f"no observable pairs among {n} draws", attempted=n, accepted=0
                )
            return sample
        return draw_fixed_n(model, n, seed)
    except SamplingBudgetError as exc:
        raise SamplingBudgetError(
            f"replication {replication}: {exc}", attempted=exc.attempted, accepted=exc.accepted
        ) from exc


def _lln_replication(model, cls, n, replication, seed, epsilon, sampling) -> dict:
    sample = _draw(model, n, seed, sampling, replication)
    lb = fit(sample)
    if isinstance(cls, IndicatorClass):
        sup, method = exact_sup_indicator(lb, cls.phi0, model), "exact"
    elif isinstance(cls, FiniteClass):
        sup, method = max_over_finite(lb, cls.members, model), "exact"
    else:
        sup, method = sup_over_class(lb, cls, model, epsilon).upper_bound, "bracket_bound"
    return {
        "n": n,
        "replication": replication,
        "seed": str(seed),
        "sup": sup,
        "method": method,
        "epsilon": epsilon,
        "degenerate": len(lb.degenerate_points) > 0,
    }


def run_lln(config: LLNConfig) -> ExperimentReport:
    """
    Check the uniform LLN: sup over the class of |W_n| shrinks with n.

    PASS when the median at the largest n is at most `lln_contraction` times
    the median at the smallest n and below 2 eps(n_max) + 3/sqrt(n_max).
    The halving rule is an operational criterion, not a rate.

    Args:
        config: LLN configuration

    Returns:
        ExperimentReport with one summary row per n
    """
    validate_lln(config)
    started = time.perf_counter()
    model, cls = config.model, config.function_class
    alpha(model)

    rows = []
    for n in config.n_grid:
        t0 = time.perf_counter()
        eps = config.epsilon(n)
        tasks = (
            delayed(_lln_replication)(model, cls, n, r, derive_seed(config.master_seed, n, r), eps, config.sampling)
            for r in range(config.replications)
        )
        rows.extend(Parallel(n_jobs=config.n_jobs)(tasks))
        logger.info("lln n=%d: %d replications in %.2fs", n, config.replications, time.perf_counter() - t0)

    frame = pd.DataFrame(rows)
    summary = (
        frame.groupby("n")
        .agg(
            median=("sup", "median"),
            q90=("sup", lambda s: s.quantile(0.9)),
            mean=("sup", "mean"),
            epsilon=("epsilon", "first"),
            degenerate=("degenerate", "sum"),
        )
        .reset_index()
    )

    n_min, n_max = min(config.n_grid), max(config.n_grid)
    med_min = float(summary.loc[summary["n"] == n_min, "median"].iloc[0])
    med_max = float(summary.loc[summary["n"] == n_max, "median"].iloc[0])
    ceiling = 2 * config.epsilon(n_max) + 3 / math.sqrt(n_max)
    contraction = config.thresholds["lln_contraction"]
    passed = bool(med_max <= contraction * med_min and med_max < ceiling)

    return ExperimentReport(
        kind="lln",
        config=config.describe(),
        thresholds=dict(config.thresholds),
        passed=passed,
        summary=summary,
        replications=frame,
        statistics={
            "median_smallest_n": med_min,
            "median_largest_n": med_max,
            "ceiling": ceiling,
            "contraction": med_max / med_min if med_min > 0 else 0.0,
            "criterion": "median(n_max) <= lln_contraction * median(n_min) and median(n_max) < 2 eps(n_max) + 3/sqrt(n_max)",
        },
        wall_time=time.perf_counter() - started,
    )


def _clt_replication(model, phis, f_sides, n, replication, seed, sampling, evaluators) -> dict:
    sample = _draw(model, n, seed, sampling, replication)
    lb = fit(sample)
    root_n = math.sqrt(lb.n)
    row = {"replication": replication, "seed": str(seed)}
    for k, phi in enumerate(phis):
        row[f"g_n_{k}"] = root_n * (integrate_against_fit(lb, phi) - f_sides[k])
        if evaluators is not None:
            row[f"remainder_{k}"] = decomposition_remainder(sample, lb, evaluators[k])
    return row


def _clt_frame(config: CLTConfig, evaluators=None) -> pd.DataFrame:
    model = config.model
    f_sides = [f_side_integral(phi, model) for phi in config.phis]
    tasks = (
        delayed(_clt_replication)(
            model, config.phis, f_sides, config.n, r, derive_seed(config.master_seed, config.n, r), config.sampling, evaluators
        )
        for r in range(config.replications)
    )
    return pd.DataFrame(Parallel(n_jobs=config.n_jobs)(tasks))


def run_clt(config: CLTConfig, remainders: bool = True) -> ExperimentReport:
    """
    Check the finite-dimensional CLT and the covariance structure.

    Each coordinate G_n(phi_k) is standardised by the quadrature sigma^2 and
    compared with N(0, 1) by K-S; the empirical covariance of the G_n vector
    is compared entrywise with Cov(zeta(phi_i), zeta(phi_j)).

    Args:
        config: CLT configuration
        remainders: Also record the i.i.d. decomposition remainder per replication

    Returns:
        ExperimentReport with one summary row per function

    Raises:
        DegenerateCoordinateError: some phi has sigma^2 = 0
    """
    validate_clt(config)
    started = time.perf_counter()
    model = config.model
    evaluators = [InfluenceEvaluator(phi, model, check=False) for phi in config.phis]

    variances = []
    for ev in evaluators:
        result = sigma2(ev, mc_seed=config.master_seed)
        if result.value <= 1e-14:
            raise DegenerateCoordinateError(f"sigma^2 = 0 for {ev.label}", phi_label=ev.label)
        variances.append(result)
    theory, methods = covariance_matrix(evaluators, mc_seed=config.master_seed)

    frame = _clt_frame(config, evaluators if remainders else None)
    g_cols = [f"g_n_{k}" for k in range(len(config.phis))]
    values = frame[g_cols].to_numpy()
    empirical = np.atleast_2d(np.cov(values, rowvar=False, ddof=1))

    critical = ks_critical_value(config.replications, config.thresholds["ks_critical"])
    rows = []
    for k, (phi, var) in enumerate(zip(config.phis, variances)):
        standardized = values[:, k] / math.sqrt(var.value)
        ks = standard_normal_ks(standardized)
        row = {
            "phi": phi.description,
            "sigma2": var.value,
            "sigma2_method": var.method,
            "sigma2_hat": float(np.var(values[:, k], ddof=1)),
            "ks": ks,
            "ks_critical": critical,
            "ks_pass": ks < critical,
        }
        if remainders:
            row["median_abs_remainder"] = float(frame[f"remainder_{k}"].abs().median())
        rows.append(row)
    summary = pd.DataFrame(rows)

    cov_error = float(np.max(np.abs(empirical - theory)))
    passed = bool(summary["ks_pass"].all() and cov_error < config.thresholds["covariance_tolerance"])
    logger.info("clt: %d replications at n=%d in %.2fs", config.replications, config.n, time.perf_counter() - started)

    return ExperimentReport(
        kind="clt",
        config=config.describe(),
        thresholds=dict(config.thresholds),
        passed=passed,
        summary=summary,
        replications=frame,
        statistics={
            "covariance_theory": theory.tolist(),
            "covariance_empirical": empirical.tolist(),
            "covariance_methods": methods,
            "max_covariance_error": cov_error,
        },
        wall_time=time.perf_counter() - started,
    )


def pair_distances(phis, model: TruncationModel) -> list:
    """(i, j, d(phi_i, phi_j)) for every pair i < j."""
    return [(i, j, d_metric(phis[i], phis[j], model.f)) for i, j in combinations(range(len(phis)), 2)]


def probe_continuity(config: CLTConfig, frame: Optional[pd.DataFrame] = None) -> pd.DataFrame:
    """
    Exceedance frequency of the largest increment over pairs closer than delta.

    For each delta, estimates P(max over pairs with d < delta of
    |G_n(phi_i) - G_n(phi_j)| > epsilon0). The frequency should not grow as
    delta shrinks; `monotone_ok` flags rows that respect this within
    `continuity_se` standard errors of the previous (larger) delta.

    Args:
        config: CLT configuration (at least two functions)
        frame: Precomputed per-replication G_n values, drawn if absent

    Returns:
        DataFrame with columns delta, pairs, exceedance, std_error, monotone_ok

    Raises:
        ConfigError: no pair lies below the smallest delta
    """
    if len(config.phis) < 2:
        raise ConfigError("continuity probe needs at least two functions", field="phis")
    distances = pair_distances(config.phis, config.model)
    smallest = min(config.delta_grid)
    if not any(d < smallest for _, _, d in distances):
        raise ConfigError(f"no pair of functions is closer than delta={smallest:g}", field="delta_grid")

    started = time.perf_counter()
    frame = frame if frame is not None else _clt_frame(config)
    values = frame[[f"g_n_{k}" for k in range(len(config.phis))]].to_numpy()

    rows = []
    for delta in sorted(config.delta_grid, reverse=True):
        close = [(i, j) for i, j, d in distances if d < delta]
        if close:
            increments = np.max(np.column_stack([np.abs(values[:, i] - values[:, j]) for i, j in close]), axis=1)
        else:
            increments = np.zeros(values.shape[0])
        p, se = exceedance_frequency(increments > config.epsilon0)
        rows.append({"delta": delta, "pairs": len(close), "exceedance": p, "std_error": se})

    table = pd.DataFrame(rows)
    slack = config.thresholds["continuity_se"]
    previous = table["exceedance"].shift(1)
    bound = previous + slack * np.maximum(table["std_error"], table["std_error"].shift(1))
    table["monotone_ok"] = (table["exceedance"] <= bound) | previous.isna()
    logger.info("continuity probe over %d deltas in %.2fs", len(rows), time.perf_counter() - started)
    return table


def run_continuity(config: CLTConfig) -> ExperimentReport:
    """probe_continuity wrapped into a report with a verdict."""
    validate_clt(config)
    started = time.perf_counter()
    frame = _clt_frame(config)
    table = probe_continuity(config, frame)
    return ExperimentReport(
        kind="continuity",
        config=config.describe(),
        thresholds=dict(config.thresholds),
        passed=bool(table["monotone_ok"].all()),
        summary=table,
        replications=frame,
        statistics={"pair_distances": [[i, j, d] for i, j, d in pair_distances(config.phis, config.model)]},
        wall_time=time.perf_counter() - started,
    )


def _alpha_replication(model, population, replication, seed) -> dict:
    sample = draw_fixed_population(model, population, seed)
    return {"replication": replication, "seed": str(seed), "n": sample.n, "rate": sample.n / population}


def estimate_alpha(
    model: TruncationModel,
    population: int,
    replications: int = 100,
    master_seed: int = 0,
    n_jobs: int = 1,
) -> ExperimentReport:
    """
    Acceptance-rate estimate n/N of alpha under fixed-population sampling.

    PASS when the mean rate lies within 3 standard errors of the quadrature alpha.
    """
    started = time.perf_counter()
    exact = alpha(model)
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_alpha_replication)(model, population, r, derive_seed(master_seed, population, r))
        for r in range(replications)
    )
    frame = pd.DataFrame(rows)
    stats_ = summarize(frame["rate"])
    se = math.sqrt(exact * (1 - exact) / (population * replications))
    passed = abs(stats_["mean"] - exact) <= 3 * se + 1e-12
    return ExperimentReport(
        kind="alpha",
        config={"model": model.describe(), "population": population, "replications": replications, "seed": master_seed},
        thresholds={"standard_errors": 3},
        passed=bool(passed),
        summary=pd.DataFrame([{"alpha": exact, **stats_, "standard_error": se}]),
        replications=frame,
        statistics={"alpha": exact},
        wall_time=time.perf_counter() - started,
    )


def _decomposition_replication(model, ev, n, replication, seed, sampling) -> dict:
    sample = _draw(model, n, seed, sampling, replication)
    lb = fit(sample)
    return {"n": n, "replication": replication, "seed": str(seed), "remainder": decomposition_remainder(sample, lb, ev)}


def run_decomposition(
    model: TruncationModel,
    phi: MeasurableFunction,
    n_grid: tuple,
    replications: int = 200,
    master_seed: int = 0,
    n_jobs: int = 1,
    sampling: str = "fixed_n",
) -> ExperimentReport:
    """
    Median |G_n(phi) - n^(-1/2) sum zeta_i| per n.

    PASS when the median at the largest n is below half the median at the smallest n.
    """
    started = time.perf_counter()
    ev = InfluenceEvaluator(phi, model)
    ev.table
    rows = []
    for n in n_grid:
        rows.extend(
            Parallel(n_jobs=n_jobs)(
                delayed(_decomposition_replication)(model, ev, n, r, derive_seed(master_seed, n, r), sampling)
                for r in range(replications)
            )
        )
    frame = pd.DataFrame(rows)
    frame["abs_remainder"] = frame["remainder"].abs()
    summary = frame.groupby("n").agg(median_abs_remainder=("abs_remainder", "median")).reset_index()
    med = summary.set_index("n")["median_abs_remainder"]
    passed = bool(med.loc[max(n_grid)] < 0.5 * med.loc[min(n_grid)])
    return ExperimentReport(
        kind="decomposition",
        config={"model": model.describe(), "phi": phi.description, "n_grid": list(n_grid), "replications": replications, "seed": master_seed},
        thresholds={"contraction": 0.5},
        passed=passed,
        summary=summary,
        replications=frame,
        wall_time=time.perf_counter() - started,
    )


def provenance(seed: int, version: str) -> dict:
    return {"seed": seed, "version": version, "rng": RNG_NAME}
