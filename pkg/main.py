"""
truncation-limits - command line front end.

    python main.py <command> --config run.yaml [--seed N] [--reps R] [--out DIR]

Commands: estimate, simulate, lln, clt, continuity, sigma2, brackets,
alpha, decomposition. Exit codes: 0 success or PASS, 1 experiment FAIL,
2 configuration or input error, 3 numerical failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional

import pandas as pd

from config import (
    COMMANDS,
    RunConfig,
    __version__,
    apply_overrides,
    build_config,
    clt_config,
    lln_config,
    parse_config,
)
from data import emit_dataset, ingest_dataset
from errors import ConfigError, TruncationLimitsError
from experiments import estimate_alpha, provenance, run_clt, run_continuity, run_decomposition, run_lln
from function_classes import ENTROPY_FLOOR, bracket_cover, entropy_integral
from influence_clt import InfluenceEvaluator, sigma2, zeta_mean
from lynden_bell import fit
from report import write_json, write_report, write_table
from sampler import draw_fixed_n, draw_fixed_population

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
BRACKET_TABLE_LIMIT = 1000


def _provenance(config: RunConfig, **extra) -> dict:
    out = provenance(config.seed, __version__)
    out["run"] = config.echo()
    out.update(extra)
    return out


def _finish(report, config: RunConfig) -> int:
    paths = write_report(report, config.output, _provenance(config))
    print(f"{report.kind}: {report.verdict} ({paths['report']})")
    for line in report.insights:
        print(f"  - {line}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_estimate(config: RunConfig) -> int:
    """Lynden-Bell fit of an ingested dataset."""
    sample = ingest_dataset(config.dataset, strict=config.strict)
    lb = fit(sample)
    out = Path(config.output)
    table = write_table(out / "estimate_step.csv", lb.to_frame())
    write_json(out / "estimate.json", {
        "dataset": config.dataset,
        "n": lb.n,
        "ties": lb.ties,
        "degenerate_points": list(lb.degenerate_points),
        "step_function": [[float(y), float(v)] for y, v in zip(lb.f_n.breakpoints, lb.f_n.values)],
        "provenance": _provenance(config),
    })
    print(f"estimate: n={lb.n}, {lb.f_n.breakpoints.size} jumps ({table})")
    return EXIT_OK


def cmd_simulate(config: RunConfig) -> int:
    """Draw a synthetic truncated dataset."""
    if config.sampling == "fixed_population":
        if config.population is None:
            raise ConfigError("fixed_population sampling requires 'population'", field="population")
        sample = draw_fixed_population(config.model, config.population, config.seed)
    else:
        sample = draw_fixed_n(config.model, config.n, config.seed)
    path = Path(config.dataset) if config.dataset else Path(config.output) / "sample.csv"
    emit_dataset(sample, path)
    print(f"simulate: {sample.n} pairs from {sample.attempted} draws ({path})")
    return EXIT_OK


def cmd_lln(config: RunConfig) -> int:
    return _finish(run_lln(lln_config(config)), config)


def cmd_clt(config: RunConfig) -> int:
    return _finish(run_clt(clt_config(config)), config)


def cmd_continuity(config: RunConfig) -> int:
    return _finish(run_continuity(clt_config(config)), config)


def cmd_sigma2(config: RunConfig) -> int:
    """Asymptotic variance of G_n(phi) and the mean of zeta."""
    ev = InfluenceEvaluator(config.phi, config.model, tol=config.tolerance)
    result = sigma2(ev, mc_seed=config.seed)
    mean = zeta_mean(ev)
    write_json(Path(config.output) / "sigma2.json", {
        "phi": ev.label,
        "model": config.model.describe(),
        "sigma2": result.value,
        "method": result.method,
        "error_estimate": result.error_estimate,
        "zeta_mean": mean,
        "provenance": _provenance(config, sigma2_method=result.method),
    })
    print(f"sigma2: {result.value:.10g} ({result.method}), mean of zeta {mean:.3g}")
    return EXIT_OK


def cmd_brackets(config: RunConfig) -> int:
    """Bracket cover at epsilon and the entropy integral J(delta)."""
    cls, base = config.function_class, config.model.f
    cover = bracket_cover(cls, config.epsilon, config.p, base)
    j_delta = entropy_integral(cls, config.delta, config.p, base)
    out = Path(config.output)

    payload = {
        "class": cls.describe(),
        "cover": cover.summary(),
        "entropy_integral": {"delta": config.delta, "value": j_delta, "floor": ENTROPY_FLOOR},
        "provenance": _provenance(config),
    }
    if cover.size <= BRACKET_TABLE_LIMIT:
        rows = [
            {"index": i, "lower": b.lower.description, "upper": b.upper.description}
            for i, b in enumerate(cover.brackets)
        ]
        payload["brackets_table"] = str(write_table(out / "brackets_table.csv", pd.DataFrame(rows)))
    write_json(out / "brackets.json", payload)
    print(f"brackets: N={cover.size} at epsilon={config.epsilon:g}, J({config.delta:g})={j_delta:.6g}")
    return EXIT_OK


def cmd_alpha(config: RunConfig) -> int:
    report = estimate_alpha(config.model, config.population, config.replications, config.seed, config.n_jobs)
    return _finish(report, config)


def cmd_decomposition(config: RunConfig) -> int:
    report = run_decomposition(
        config.model, config.phi, config.n_grid, config.replications, config.seed, config.n_jobs, config.sampling
    )
    return _finish(report, config)


HANDLERS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "lln": cmd_lln,
    "clt": cmd_clt,
    "continuity": cmd_continuity,
    "sigma2": cmd_sigma2,
    "brackets": cmd_brackets,
    "alpha": cmd_alpha,
    "decomposition": cmd_decomposition,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--dataset", help="dataset CSV (input for estimate, output for simulate)")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--reps", type=int, help="number of replications")
    common.add_argument("--out", help="output directory")
    common.add_argument("--tol", type=float, help="quadrature tolerance")
    common.add_argument("--jobs", type=int, help="parallel workers (joblib n_jobs)")
    strictness = common.add_mutually_exclusive_group()
    strictness.add_argument("--strict", dest="strict", action="store_true", default=None, help="reject rows with y < t")
    strictness.add_argument("--lenient", dest="strict", action="store_false", help="drop rows with y < t")
    common.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    common.set_defaults(strict=None)

    parser = argparse.ArgumentParser(prog="truncation-limits", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        doc = HANDLERS[name].__doc__
        sub.add_parser(name, parents=[common], help=doc.strip() if doc else None)
    return parser


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def load_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        config = parse_config(args.config, command=args.command)
    elif args.command == "estimate" and args.dataset:
        config = build_config({"dataset": args.dataset}, command="estimate")
    else:
        raise ConfigError(f"'{args.command}' needs --config")
    return apply_overrides(
        config,
        seed=args.seed,
        replications=args.reps,
        output=args.out,
        tolerance=args.tol,
        n_jobs=args.jobs,
        strict=args.strict,
        dataset=args.dataset,
    )


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        config = load_config(args)
        return HANDLERS[config.command](config)
    except TruncationLimitsError as exc:
        logger.debug("%s failed", args.command, exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
