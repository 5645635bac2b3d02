from pathlib import Path

import pytest

from config import (
    RunConfig,
    apply_overrides,
    build_config,
    clt_config,
    lln_config,
    parse_config,
    parse_phi,
)
from errors import AssumptionViolation, ConfigError
from function_classes import IndicatorClass, LipschitzClass

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SHIFTED = {
    "f": {"family": "uniform", "lo": 0.0, "hi": 1.0},
    "g": {"family": "uniform", "lo": -0.5, "hi": 0.5},
}


def write(tmp_path, text):
    path = tmp_path / "run.yaml"
    path.write_text(text, encoding="utf-8")
    return path


class TestParsePhi:
    @pytest.mark.parametrize(
        "text, probe, expected",
        [
            ("indicator(0.5)", 0.5, 1.0),
            ("indicator(0.5)", 0.6, 0.0),
            ("identity", 0.3, 0.3),
            ("zero", 0.7, 0.0),
            ("constant(2)", 0.1, 2.0),
            ("lipschitz(2, 0.5)", 0.75, 0.5),
            ("lipschitz(1)", 0.25, 0.25),
        ],
    )
    def test_forms(self, text, probe, expected):
        assert parse_phi(text)(probe) == pytest.approx(expected)

    @pytest.mark.parametrize("text", ["indicator", "indicator(1, 2)", "sine(1)", "indicator(x)", "1+"])
    def test_rejects(self, text):
        with pytest.raises(ValueError):
            parse_phi(text)


class TestBuildConfig:
    def test_defaults(self):
        config = build_config({"model": SHIFTED, "phi": "indicator(0.5)"}, command="sigma2")
        assert config.seed == 0
        assert config.replications == 200
        assert config.sampling == "fixed_n"
        assert config.delta_grid == (0.4, 0.2, 0.1)
        assert config.thresholds["ks_critical"] == 1.63
        assert config.strict is True

    def test_command_from_file(self):
        config = build_config({"command": "alpha", "model": SHIFTED, "population": 100})
        assert config.command == "alpha"

    def test_command_mismatch(self):
        with pytest.raises(ConfigError, match="declares"):
            build_config({"command": "alpha", "model": SHIFTED, "population": 100}, command="lln")

    def test_missing_required(self):
        with pytest.raises(ConfigError) as info:
            build_config({"model": SHIFTED}, command="clt")
        assert info.value.field == "phis"

    def test_lln_needs_assumption_a(self):
        model = {"f": SHIFTED["f"], "g": {"family": "uniform", "lo": 2.0, "hi": 3.0}}
        with pytest.raises(AssumptionViolation) as info:
            build_config({"model": model, "class": {"kind": "indicator"}, "n_grid": [10, 20]}, command="lln")
        assert info.value.assumption == "A"

    def test_clt_needs_assumption_b(self):
        model = {"f": SHIFTED["f"], "g": SHIFTED["f"]}
        with pytest.raises(AssumptionViolation) as info:
            build_config({"model": model, "phis": ["indicator(0.5)"]}, command="clt")
        assert info.value.assumption == "B"

    def test_unknown_family(self):
        model = {"f": {"family": "cauchy"}, "g": SHIFTED["g"]}
        with pytest.raises(ConfigError) as info:
            build_config({"model": model, "population": 10}, command="alpha")
        assert info.value.field == "model.f.family"

    def test_n_grid_must_increase(self):
        with pytest.raises(ConfigError, match="strictly increasing"):
            build_config({"model": SHIFTED, "class": {"kind": "indicator"}, "n_grid": [200, 100]}, command="lln")

    def test_delta_grid_sorted(self):
        config = build_config({"model": SHIFTED, "phis": ["indicator(0.5)", "indicator(0.52)"], "delta_grid": [0.1, 0.4]}, command="continuity")
        assert config.delta_grid == (0.4, 0.1)

    @pytest.mark.parametrize("key, value", [("p", 3), ("delta", 1.5), ("epsilon", -0.1), ("seed", -1), ("n_jobs", 0)])
    def test_invalid_values(self, key, value):
        raw = {"model": SHIFTED, "class": {"kind": "indicator"}, "epsilon": 0.1, key: value}
        with pytest.raises(ConfigError) as info:
            build_config(raw, command="brackets")
        assert info.value.field == key

    def test_classes(self):
        lip = build_config(
            {"model": SHIFTED, "class": {"kind": "lipschitz", "lipschitz": 2.0, "bound": 1.0}, "epsilon": 0.5},
            command="brackets",
        )
        assert isinstance(lip.function_class, LipschitzClass) and lip.function_class.lipschitz == 2.0
        weighted = build_config(
            {"model": SHIFTED, "class": {"kind": "indicator", "phi0": "identity"}, "epsilon": 0.5},
            command="brackets",
        )
        assert isinstance(weighted.function_class, IndicatorClass)
        assert weighted.function_class.phi0.description == "identity"

    def test_bad_member(self):
        raw = {"model": SHIFTED, "class": {"kind": "finite", "members": ["indicator(0.5)", "bogus"]}, "epsilon": 0.5}
        with pytest.raises(ConfigError) as info:
            build_config(raw, command="brackets")
        assert info.value.field == "class.members[1]"


class TestParseConfig:
    def test_shipped_configs_parse(self):
        for path in sorted(CONFIGS.glob("*.yaml")):
            config = parse_config(path)
            assert isinstance(config, RunConfig)

    def test_unknown_key_has_line(self, tmp_path):
        path = write(tmp_path, "command: lln\nseed: 1\nepsilonn: 0.1\n")
        with pytest.raises(ConfigError) as info:
            parse_config(path)
        assert info.value.field == "epsilonn"
        assert info.value.line == 3
        assert "line 3" in str(info.value)

    def test_nested_unknown_key(self, tmp_path):
        text = "command: alpha\npopulation: 10\nmodel:\n  f: {family: uniform, lo: 0, hi: 1}\n  g: {family: uniform, lo: 0, hi: 1, mean: 3}\n"
        with pytest.raises(ConfigError) as info:
            parse_config(write(tmp_path, text))
        assert info.value.field == "model.g.mean"
        assert info.value.line == 5

    def test_yaml_syntax_error(self, tmp_path):
        path = write(tmp_path, "command: lln\nseed: [1, 2\n")
        with pytest.raises(ConfigError) as info:
            parse_config(path)
        assert info.value.line is not None
        assert "YAML syntax error" in str(info.value)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "absent.yaml")


class TestOverrides:
    def test_none_is_ignored(self):
        config = build_config({"model": SHIFTED, "phi": "indicator(0.5)", "seed": 4}, command="sigma2")
        assert apply_overrides(config, seed=None) is config

    def test_values_replace(self):
        config = build_config({"model": SHIFTED, "phi": "indicator(0.5)"}, command="sigma2")
        updated = apply_overrides(config, seed=8, replications=3, tolerance=1e-6)
        assert (updated.seed, updated.replications) == (8, 3)
        assert updated.model.tol == 1e-6
        assert updated.echo()["seed"] == 8

    @pytest.mark.parametrize(
        "key, value",
        [("replications", 0), ("seed", -1), ("n_jobs", 0), ("tolerance", 0.0), ("tolerance", -1e-6)],
    )
    def test_values_are_validated(self, key, value):
        config = build_config({"model": SHIFTED, "phi": "indicator(0.5)"}, command="sigma2")
        with pytest.raises(ConfigError) as info:
            apply_overrides(config, **{key: value})
        assert info.value.field == key

    def test_experiment_configs(self):
        lln = build_config(
            {"model": SHIFTED, "class": {"kind": "indicator"}, "n_grid": [10, 20], "epsilon_rule": {"scale": 0.5}},
            command="lln",
        )
        assert lln_config(lln).epsilon(16) == pytest.approx(0.25)
        clt = build_config({"model": SHIFTED, "phis": ["indicator(0.5)"], "n": 30}, command="clt")
        assert clt_config(clt).n == 30
