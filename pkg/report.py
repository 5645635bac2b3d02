"""
Report writing for truncation-limits.

Turns an ExperimentReport (or a plain result dictionary) into a JSON
document plus companion CSV tables, and annotates it with short
plain-language insights.
"""

import json
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from experiments import ExperimentReport

logger = logging.getLogger(__name__)


def _lln_insights(report: ExperimentReport) -> list:
    stats = report.statistics
    insights = []
    ratio = stats.get("contraction", 0.0)
    if report.summary["median"].max() == 0.0:
        insights.append("Supremum is identically zero at every n.")
    elif ratio <= 0.25:
        insights.append(f"Median supremum contracts strongly across the n grid (factor {ratio:.3f}).")
    elif ratio <= report.thresholds["lln_contraction"]:
        insights.append(f"Median supremum contracts across the n grid (factor {ratio:.3f}).")
    else:
        insights.append(f"Median supremum contracts too little across the n grid (factor {ratio:.3f}).")

    if stats["median_largest_n"] >= stats["ceiling"]:
        insights.append(
            f"Median at the largest n ({stats['median_largest_n']:.4f}) exceeds the ceiling {stats['ceiling']:.4f}."
        )
    degenerate = int(report.summary["degenerate"].sum())
    if degenerate:
        insights.append(f"{degenerate} replications hit an interior risk-set degeneracy.")
    insights.append("The halving rule is an operational criterion; no convergence rate is implied.")
    return insights


def _clt_insights(report: ExperimentReport) -> list:
    insights = []
    for row in report.summary.to_dict(orient="records"):
        margin = row["ks_critical"] - row["ks"]
        if margin > 0:
            insights.append(f"{row['phi']}: K-S distance {row['ks']:.4f} is below the critical value by {margin:.4f}.")
        else:
            insights.append(f"{row['phi']}: K-S distance {row['ks']:.4f} exceeds the critical value {row['ks_critical']:.4f}.")

        rel = abs(row["sigma2_hat"] - row["sigma2"]) / row["sigma2"]
        if rel > 0.2:
            insights.append(
                f"{row['phi']}: sample variance {row['sigma2_hat']:.4f} disagrees with the limit {row['sigma2']:.4f} ({rel:.0%})."
            )
        else:
            insights.append(f"{row['phi']}: sample variance {row['sigma2_hat']:.4f} agrees with the limit {row['sigma2']:.4f}.")
        if row["sigma2_method"] == "monte_carlo":
            insights.append(f"{row['phi']}: sigma^2 fell back to Monte Carlo.")

    error = report.statistics.get("max_covariance_error")
    if error is not None:
        tolerance = report.thresholds["covariance_tolerance"]
        verdict = "within" if error < tolerance else "outside"
        insights.append(f"Largest covariance entry error {error:.4f} is {verdict} the tolerance {tolerance:g}.")
    return insights


def _continuity_insights(report: ExperimentReport) -> list:
    table = report.summary
    insights = []
    if table["exceedance"].max() == 0.0:
        insights.append("No increment exceeded epsilon0 at any delta.")
    elif table["monotone_ok"].all():
        first, last = table["exceedance"].iloc[0], table["exceedance"].iloc[-1]
        insights.append(f"Exceedance frequency falls from {first:.3f} to {last:.3f} as delta shrinks.")
    else:
        bad = table.loc[~table["monotone_ok"], "delta"].tolist()
        insights.append(f"Exceedance frequency rises beyond the standard-error slack at delta {bad}.")
    return insights


def _alpha_insights(report: ExperimentReport) -> list:
    row = report.summary.iloc[0]
    gap = abs(row["mean"] - row["alpha"])
    return [f"Acceptance rate {row['mean']:.5f} vs alpha {row['alpha']:.5f} ({gap / max(row['standard_error'], 1e-300):.2f} standard errors)."]


def _decomposition_insights(report: ExperimentReport) -> list:
    med = report.summary["median_abs_remainder"]
    return [f"Median remainder moves from {med.iloc[0]:.4g} to {med.iloc[-1]:.4g} across the n grid."]


INSIGHTS = {
    "lln": _lln_insights,
    "clt": _clt_insights,
    "continuity": _continuity_insights,
    "alpha": _alpha_insights,
    "decomposition": _decomposition_insights,
}


def generate_insights(report: ExperimentReport) -> list:
    """Plain-language notes on an experiment outcome; empty for unknown kinds."""
    builder = INSIGHTS.get(report.kind)
    return builder(report) if builder else []


def to_jsonable(value):
    """Recursively convert numpy scalars/arrays and non-finite floats for JSON."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    return value


def report_payload(report: ExperimentReport, provenance: dict) -> dict:
    """JSON-ready document for an experiment report."""
    if not report.insights:
        report.insights = generate_insights(report)
    return to_jsonable({
        "kind": report.kind,
        "verdict": report.verdict,
        "config": report.config,
        "thresholds": report.thresholds,
        "summary": report.summary.to_dict(orient="records"),
        "statistics": report.statistics,
        "seeds": report.replications["seed"].tolist() if "seed" in report.replications else [],
        "insights": report.insights,
        "wall_time": report.wall_time,
        "provenance": provenance,
    })


def write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(to_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def write_table(path: Path, frame: pd.DataFrame) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def write_report(
    report: ExperimentReport,
    out_dir,
    provenance: dict,
    stem: Optional[str] = None,
) -> dict:
    """
    Write `<stem>.json`, `<stem>_summary.csv` and `<stem>_replications.csv`.

    Args:
        report: Experiment report
        out_dir: Output directory (created if missing)
        provenance: Version, seed and RNG information
        stem: File name stem (defaults to the report kind)

    Returns:
        Mapping of artifact name to written path
    """
    out = Path(out_dir)
    stem = stem or report.kind
    paths = {
        "report": write_json(out / f"{stem}.json", report_payload(report, provenance)),
        "summary": write_table(out / f"{stem}_summary.csv", report.summary),
        "replications": write_table(out / f"{stem}_replications.csv", report.replications),
    }
    logger.info("%s report written to %s (%s)", report.kind, paths["report"], report.verdict)
    return paths
