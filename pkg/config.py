"""
Run configuration for truncation-limits.

A run is declared in one YAML file. Models are distribution families plus
parameters, functions are short named forms such as `indicator(0.5)`, and
classes are `{kind: ..., ...}` mappings. Unknown keys are errors, reported
with their dotted path and the line they appear on.
"""

import logging
import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import yaml

import function_classes as fc
import truncation_model as tm
from errors import AssumptionViolation, ConfigError
from experiments import DEFAULT_THRESHOLDS, CLTConfig, LLNConfig
from influence_clt import check_weak_conditions

logger = logging.getLogger(__name__)

__version__ = "0.3.0"

COMMANDS = ("estimate", "simulate", "lln", "clt", "continuity", "sigma2", "brackets", "alpha", "decomposition")
SAMPLING_MODES = ("fixed_n", "fixed_population")

TOP_LEVEL_KEYS = {
    "command", "seed", "replications", "n_jobs", "tolerance", "sampling", "model", "class",
    "phi", "phis", "n_grid", "n", "epsilon_rule", "delta_grid", "epsilon0", "epsilon", "p",
    "delta", "population", "thresholds", "output", "dataset", "strict",
}

REQUIRED = {
    "estimate": ("dataset",),
    "simulate": ("model",),
    "lln": ("model", "class", "n_grid"),
    "clt": ("model", "phis"),
    "continuity": ("model", "phis"),
    "sigma2": ("model", "phi"),
    "brackets": ("model", "class", "epsilon"),
    "alpha": ("model", "population"),
    "decomposition": ("model", "phi", "n_grid"),
}

FAMILIES = {
    "uniform": (tm.uniform, {"lo", "hi"}),
    "exponential": (tm.exponential, {"rate", "loc"}),
    "weibull": (tm.weibull, {"shape", "scale", "loc"}),
    "point": (tm.point_mass, {"at"}),
    "piecewise_linear": (tm.piecewise_linear, {"knots"}),
}

CLASS_KEYS = {
    "indicator": {"kind", "phi0"},
    "lipschitz": {"kind", "lo", "hi", "lipschitz", "bound", "knots"},
    "finite": {"kind", "members"},
}

PHI_FORM = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


@dataclass(frozen=True)
class RunConfig:
    """A validated run with documented defaults filled in."""

    command: str
    seed: int = 0
    replications: int = 200
    n_jobs: int = 1
    tolerance: float = tm.DEFAULT_TOL
    sampling: str = "fixed_n"
    model: Optional[tm.TruncationModel] = None
    function_class: Optional[fc.FunctionClass] = None
    phi: Optional[fc.MeasurableFunction] = None
    phis: tuple = ()
    n_grid: tuple = ()
    n: int = 1000
    epsilon_rule: dict = field(default_factory=lambda: {"scale": 1.0, "power": 0.25})
    delta_grid: tuple = (0.4, 0.2, 0.1)
    epsilon0: float = 0.25
    epsilon: Optional[float] = None
    p: int = 1
    delta: float = 1.0
    population: Optional[int] = None
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))
    output: str = "out"
    dataset: Optional[str] = None
    strict: bool = True
    source: dict = field(default_factory=dict, compare=False)

    def echo(self) -> dict:
        """The configuration as written, with defaults and overrides applied."""
        out = dict(self.source)
        out.update({
            "command": self.command,
            "seed": self.seed,
            "replications": self.replications,
            "n_jobs": self.n_jobs,
            "tolerance": self.tolerance,
            "sampling": self.sampling,
            "thresholds": dict(self.thresholds),
            "output": self.output,
            "strict": self.strict,
        })
        return out


# ----------------------------------------------------------------------------
# YAML positions
# ----------------------------------------------------------------------------


def _key_lines(node, prefix: str = "", lines: Optional[dict] = None) -> dict:
    """Dotted key path -> 1-based line, for every mapping key in a composed YAML tree."""
    lines = {} if lines is None else lines
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            lines[path] = key.start_mark.line + 1
            _key_lines(value, path, lines)
    elif isinstance(node, yaml.SequenceNode):
        for i, item in enumerate(node.value):
            path = f"{prefix}[{i}]"
            lines[path] = item.start_mark.line + 1
            _key_lines(item, path, lines)
    return lines


class _Context:
    """Raises ConfigErrors that carry the line of the offending key."""

    def __init__(self, lines: dict):
        self.lines = lines

    def error(self, path: str, message: str) -> ConfigError:
        probe = path
        line = self.lines.get(probe)
        while line is None and "." in probe:
            probe = probe.rsplit(".", 1)[0]
            line = self.lines.get(probe)
        return ConfigError(message, field=path, line=line)

    def unknown(self, mapping: dict, allowed: set, prefix: str) -> None:
        for key in mapping:
            if key not in allowed:
                path = f"{prefix}.{key}" if prefix else str(key)
                raise self.error(path, f"unknown key '{path}' (expected one of {sorted(allowed)})")

    def mapping(self, value, path: str) -> dict:
        if not isinstance(value, dict):
            raise self.error(path, "expected a mapping")
        return value

    def integer(self, value, path: str, minimum: int = 0) -> int:
        if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
            raise self.error(path, f"expected an integer >= {minimum}, got {value!r}")
        return value

    def real(self, value, path: str, positive: bool = False) -> float:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise self.error(path, f"expected a real number, got {value!r}")
        if positive and value <= 0:
            raise self.error(path, f"expected a positive number, got {value!r}")
        return float(value)


# ----------------------------------------------------------------------------
# Builders
# ----------------------------------------------------------------------------


def _run_settings(ctx: _Context, raw: dict) -> dict:
    """Seed, replication count, worker count and tolerance, validated."""
    out = {}
    if "seed" in raw:
        out["seed"] = ctx.integer(raw["seed"], "seed")
    if "replications" in raw:
        out["replications"] = ctx.integer(raw["replications"], "replications", minimum=1)
    if "n_jobs" in raw:
        n_jobs = raw["n_jobs"]
        if isinstance(n_jobs, bool) or not isinstance(n_jobs, int) or n_jobs == 0:
            raise ctx.error("n_jobs", f"expected a nonzero integer, got {n_jobs!r}")
        out["n_jobs"] = n_jobs
    if "tolerance" in raw:
        out["tolerance"] = ctx.real(raw["tolerance"], "tolerance", positive=True)
    return out


def parse_phi(text: str) -> fc.MeasurableFunction:
    """
    Build a function from its named form.

    Forms: `indicator(s)`, `identity`, `zero`, `constant(c)`,
    `lipschitz(slope)` or `lipschitz(slope, center)`.

    Raises:
        ValueError: unknown form or wrong arguments
    """
    match = PHI_FORM.match(str(text))
    if not match:
        raise ValueError(f"cannot parse function '{text}'")
    name, raw = match.group(1), match.group(2)
    args = [float(a) for a in raw.split(",")] if raw and raw.strip() else []

    forms = {
        "indicator": (fc.indicator, (1,)),
        "identity": (fc.identity, (0,)),
        "zero": (fc.zero, (0,)),
        "constant": (fc.constant, (1,)),
        "lipschitz": (fc.lipschitz, (1, 2)),
    }
    if name not in forms:
        raise ValueError(f"unknown function '{name}' (expected one of {sorted(forms)})")
    factory, arities = forms[name]
    if len(args) not in arities:
        raise ValueError(f"{name} takes {' or '.join(map(str, arities))} arguments, got {len(args)}")
    return factory(*args)


def _distribution(ctx: _Context, raw, path: str) -> tm.ContinuousDistribution:
    raw = ctx.mapping(raw, path)
    family = raw.get("family")
    if family not in FAMILIES:
        raise ctx.error(f"{path}.family", f"unknown family {family!r} (expected one of {sorted(FAMILIES)})")
    factory, params = FAMILIES[family]
    ctx.unknown(raw, params | {"family"}, path)
    kwargs = {k: v for k, v in raw.items() if k != "family"}
    for key, value in kwargs.items():
        if key != "knots":
            ctx.real(value, f"{path}.{key}")
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ctx.error(path, str(exc)) from exc


def _model(ctx: _Context, raw, tolerance: float) -> tm.TruncationModel:
    raw = ctx.mapping(raw, "model")
    ctx.unknown(raw, {"f", "g"}, "model")
    for side in ("f", "g"):
        if side not in raw:
            raise ctx.error("model", f"model needs '{side}'")
    return tm.TruncationModel(_distribution(ctx, raw["f"], "model.f"), _distribution(ctx, raw["g"], "model.g"), tol=tolerance)


def _phi(ctx: _Context, raw, path: str) -> fc.MeasurableFunction:
    try:
        return parse_phi(raw)
    except ValueError as exc:
        raise ctx.error(path, str(exc)) from exc


def _function_class(ctx: _Context, raw) -> fc.FunctionClass:
    raw = ctx.mapping(raw, "class")
    kind = raw.get("kind")
    if kind not in CLASS_KEYS:
        raise ctx.error("class.kind", f"unknown class kind {kind!r} (expected one of {sorted(CLASS_KEYS)})")
    ctx.unknown(raw, CLASS_KEYS[kind], "class")

    if kind == "indicator":
        phi0 = _phi(ctx, raw["phi0"], "class.phi0") if "phi0" in raw else None
        return fc.IndicatorClass(phi0)
    if kind == "lipschitz":
        kwargs = {k: ctx.real(v, f"class.{k}") for k, v in raw.items() if k not in ("kind", "knots")}
        if "knots" in raw:
            kwargs["knots"] = ctx.integer(raw["knots"], "class.knots", minimum=2)
        try:
            return fc.LipschitzClass(**kwargs)
        except ValueError as exc:
            raise ctx.error("class", str(exc)) from exc
    members = raw.get("members")
    if not isinstance(members, list) or not members:
        raise ctx.error("class.members", "finite class needs a nonempty list of members")
    return fc.FiniteClass([_phi(ctx, m, f"class.members[{i}]") for i, m in enumerate(members)])


def _thresholds(ctx: _Context, raw) -> dict:
    raw = ctx.mapping(raw, "thresholds")
    ctx.unknown(raw, set(DEFAULT_THRESHOLDS), "thresholds")
    out = dict(DEFAULT_THRESHOLDS)
    out.update({k: ctx.real(v, f"thresholds.{k}", positive=True) for k, v in raw.items()})
    return out


def _epsilon_rule(ctx: _Context, raw) -> dict:
    raw = ctx.mapping(raw, "epsilon_rule")
    ctx.unknown(raw, {"scale", "power"}, "epsilon_rule")
    rule = {"scale": 1.0, "power": 0.25}
    rule.update({k: ctx.real(v, f"epsilon_rule.{k}", positive=True) for k, v in raw.items()})
    return rule


def _n_grid(ctx: _Context, raw) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ctx.error("n_grid", "expected a nonempty list of sample sizes")
    grid = tuple(ctx.integer(v, f"n_grid[{i}]", minimum=1) for i, v in enumerate(raw))
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ctx.error("n_grid", "sample sizes must be strictly increasing")
    return grid


def _delta_grid(ctx: _Context, raw) -> tuple:
    if not isinstance(raw, list) or not raw:
        raise ctx.error("delta_grid", "expected a nonempty list of distances")
    return tuple(sorted((ctx.real(v, f"delta_grid[{i}]", positive=True) for i, v in enumerate(raw)), reverse=True))


def build_config(raw: dict, command: Optional[str] = None, lines: Optional[dict] = None) -> RunConfig:
    """
    Validate a raw mapping into a RunConfig.

    Args:
        raw: Mapping as loaded from YAML
        command: Subcommand; must agree with raw['command'] when both are given
        lines: Dotted key path -> line map for diagnostics

    Returns:
        RunConfig
    """
    ctx = _Context(lines or {})
    raw = ctx.mapping(raw if raw is not None else {}, "")
    ctx.unknown(raw, TOP_LEVEL_KEYS, "")

    file_command = raw.get("command")
    if command and file_command and command != file_command:
        raise ctx.error("command", f"file declares '{file_command}' but '{command}' was requested")
    command = command or file_command
    if command not in COMMANDS:
        raise ctx.error("command", f"unknown command {command!r} (expected one of {list(COMMANDS)})")
    for key in REQUIRED[command]:
        if key not in raw:
            raise ConfigError(f"'{command}' requires '{key}'", field=key)

    kwargs = {"command": command, "source": {k: v for k, v in raw.items()}}
    kwargs.update(_run_settings(ctx, raw))
    if "sampling" in raw:
        if raw["sampling"] not in SAMPLING_MODES:
            raise ctx.error("sampling", f"expected one of {list(SAMPLING_MODES)}, got {raw['sampling']!r}")
        kwargs["sampling"] = raw["sampling"]

    tolerance = kwargs.get("tolerance", tm.DEFAULT_TOL)
    if "model" in raw:
        kwargs["model"] = _model(ctx, raw["model"], tolerance)
    if "class" in raw:
        kwargs["function_class"] = _function_class(ctx, raw["class"])
    if "phi" in raw:
        kwargs["phi"] = _phi(ctx, raw["phi"], "phi")
    if "phis" in raw:
        if not isinstance(raw["phis"], list) or not raw["phis"]:
            raise ctx.error("phis", "expected a nonempty list of functions")
        kwargs["phis"] = tuple(_phi(ctx, v, f"phis[{i}]") for i, v in enumerate(raw["phis"]))
    if "n_grid" in raw:
        kwargs["n_grid"] = _n_grid(ctx, raw["n_grid"])
    if "n" in raw:
        kwargs["n"] = ctx.integer(raw["n"], "n", minimum=1)
    if "epsilon_rule" in raw:
        kwargs["epsilon_rule"] = _epsilon_rule(ctx, raw["epsilon_rule"])
    if "delta_grid" in raw:
        kwargs["delta_grid"] = _delta_grid(ctx, raw["delta_grid"])
    for key in ("epsilon0", "epsilon", "delta"):
        if key in raw:
            kwargs[key] = ctx.real(raw[key], key, positive=True)
    if kwargs.get("delta", 1.0) > 1.0:
        raise ctx.error("delta", f"delta must lie in (0, 1], got {kwargs['delta']!r}")
    if "p" in raw:
        kwargs["p"] = ctx.integer(raw["p"], "p", minimum=1)
        if kwargs["p"] not in (1, 2):
            raise ctx.error("p", f"p must be 1 or 2, got {kwargs['p']!r}")
    if "population" in raw:
        kwargs["population"] = ctx.integer(raw["population"], "population", minimum=1)
    if "thresholds" in raw:
        kwargs["thresholds"] = _thresholds(ctx, raw["thresholds"])
    if "output" in raw:
        kwargs["output"] = str(raw["output"])
    if "dataset" in raw:
        kwargs["dataset"] = str(raw["dataset"])
    if "strict" in raw:
        if not isinstance(raw["strict"], bool):
            raise ctx.error("strict", f"expected true or false, got {raw['strict']!r}")
        kwargs["strict"] = raw["strict"]

    config = RunConfig(**kwargs)
    check_command_assumptions(config)
    return config


def check_command_assumptions(config: RunConfig) -> None:
    """
    Run the assumption checks a command needs.

    `lln` needs Assumption A; `clt` and `continuity` need Assumption B and
    the weak conditions for every function; `sigma2` and `decomposition`
    need Assumption B or the weak conditions.

    Raises:
        AssumptionViolation: naming A, B or weak
    """
    command, model = config.command, config.model
    if command == "lln":
        if not tm.check_assumptions(model).a_holds:
            raise AssumptionViolation("Assumption A fails: need F, G continuous and a_G < b_F", assumption="A")
    elif command in ("clt", "continuity"):
        if not tm.check_assumptions(model).b_holds:
            raise AssumptionViolation("Assumption B fails: need F continuous and a_G < a_F", assumption="B")
        for phi in config.phis:
            if not check_weak_conditions(phi, model).holds:
                raise AssumptionViolation(f"weak conditions fail for {phi.description}", assumption="weak")
    elif command in ("sigma2", "decomposition"):
        if not tm.check_assumptions(model).b_holds and not check_weak_conditions(config.phi, model).holds:
            raise AssumptionViolation(
                f"neither Assumption B nor the weak conditions hold for {config.phi.description}", assumption="weak"
            )


def parse_config(path, command: Optional[str] = None) -> RunConfig:
    """
    Load and validate a YAML run configuration.

    Args:
        path: YAML file
        command: Subcommand requested on the command line

    Returns:
        RunConfig with documented defaults filled in

    Raises:
        ConfigError: unreadable file, YAML syntax error (with line and
            column), unknown key or invalid value (with field path)
        AssumptionViolation: the model fails the command's assumption
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc

    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        if mark is not None:
            raise ConfigError(f"YAML syntax error at column {mark.column + 1}: {exc.problem}", line=mark.line + 1) from exc
        raise ConfigError(f"YAML syntax error: {exc}") from exc

    lines = _key_lines(node) if node is not None else {}
    config = build_config(raw, command=command, lines=lines)
    logger.debug("parsed %s config from %s", config.command, path)
    return config


def apply_overrides(config: RunConfig, **overrides) -> RunConfig:
    """
    Apply command-line overrides (None values are ignored).

    Overrides pass the same checks as the file values. A tolerance override
    rebuilds the model with the new tolerance.

    Raises:
        ConfigError: an override is out of range
    """
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return config
    changes.update(_run_settings(_Context({}), changes))
    if "tolerance" in changes and config.model is not None:
        changes["model"] = replace(config.model, tol=changes["tolerance"])
    return replace(config, **changes)


def lln_config(config: RunConfig) -> LLNConfig:
    rule = config.epsilon_rule
    return LLNConfig(
        model=config.model,
        function_class=config.function_class,
        n_grid=config.n_grid,
        replications=config.replications,
        epsilon_scale=rule["scale"],
        epsilon_power=rule["power"],
        master_seed=config.seed,
        n_jobs=config.n_jobs,
        sampling=config.sampling,
        thresholds=dict(config.thresholds),
    )


def clt_config(config: RunConfig) -> CLTConfig:
    return CLTConfig(
        model=config.model,
        phis=config.phis,
        n=config.n,
        replications=config.replications,
        master_seed=config.seed,
        delta_grid=config.delta_grid,
        epsilon0=config.epsilon0,
        n_jobs=config.n_jobs,
        sampling=config.sampling,
        thresholds=dict(config.thresholds),
    )
