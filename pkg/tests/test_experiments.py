import pandas as pd
import pytest

from errors import AssumptionViolation, ConfigError, DegenerateCoordinateError, SamplingBudgetError
from experiments import (
    CLTConfig,
    LLNConfig,
    estimate_alpha,
    pair_distances,
    probe_continuity,
    provenance,
    run_clt,
    run_continuity,
    run_decomposition,
    run_lln,
)
from function_classes import FiniteClass, IndicatorClass, LipschitzClass, constant, indicator, zero
from truncation_model import TruncationModel, uniform


class TestLLN:
    def test_zero_class_passes(self, uniform_shifted):
        config = LLNConfig(uniform_shifted, FiniteClass([zero()]), n_grid=(50, 100), replications=5)
        report = run_lln(config)
        assert report.passed and report.verdict == "PASS"
        assert (report.replications["sup"] == 0.0).all()
        assert list(report.summary["n"]) == [50, 100]

    def test_requires_assumption_a(self, disjoint):
        config = LLNConfig(disjoint, IndicatorClass(), n_grid=(50, 100), replications=2)
        with pytest.raises(AssumptionViolation) as info:
            run_lln(config)
        assert info.value.assumption == "A"

    def test_empty_population_is_a_sampling_failure(self):
        rare = TruncationModel(uniform(0.0, 1.0), uniform(0.999, 1.999))
        config = LLNConfig(rare, IndicatorClass(), n_grid=(5, 10), replications=2, sampling="fixed_population")
        with pytest.raises(SamplingBudgetError) as info:
            run_lln(config)
        assert info.value.accepted == 0
        assert info.value.exit_code == 3

    def test_epsilon_rule(self, uniform_shifted):
        config = LLNConfig(uniform_shifted, IndicatorClass(), n_grid=(16,), epsilon_scale=2.0, epsilon_power=0.5)
        assert config.epsilon(16) == pytest.approx(0.5)

    def test_same_seed_same_rows(self, uniform_shifted):
        config = LLNConfig(uniform_shifted, IndicatorClass(), n_grid=(50, 100), replications=4, master_seed=9)
        first, second = run_lln(config), run_lln(config)
        pd.testing.assert_frame_equal(first.replications, second.replications)

    def test_parallel_matches_serial(self, uniform_shifted):
        serial = LLNConfig(uniform_shifted, IndicatorClass(), n_grid=(50,), replications=4, master_seed=2)
        parallel = LLNConfig(uniform_shifted, IndicatorClass(), n_grid=(50,), replications=4, master_seed=2, n_jobs=2)
        pd.testing.assert_frame_equal(run_lln(serial).replications, run_lln(parallel).replications)

    def test_replication_seed_is_independent_of_count(self, uniform_shifted):
        few = run_lln(LLNConfig(uniform_shifted, IndicatorClass(), n_grid=(60,), replications=3, master_seed=5))
        many = run_lln(LLNConfig(uniform_shifted, IndicatorClass(), n_grid=(60,), replications=6, master_seed=5))
        pd.testing.assert_frame_equal(few.replications, many.replications.iloc[:3])

    def test_lipschitz_uses_bracket_bound(self, uniform_shifted):
        config = LLNConfig(uniform_shifted, LipschitzClass(), n_grid=(100,), replications=2, epsilon_scale=2.0)
        report = run_lln(config)
        assert set(report.replications["method"]) == {"bracket_bound"}

    @pytest.mark.slow
    def test_indicator_class_contracts(self, uniform_shifted):
        config = LLNConfig(uniform_shifted, IndicatorClass(), n_grid=(100, 400, 1600), replications=50, master_seed=1)
        report = run_lln(config)
        assert report.passed
        assert report.statistics["contraction"] < 0.5

    @pytest.mark.slow
    def test_indicator_class_halves_between_200_and_2000(self, uniform_uniform):
        config = LLNConfig(uniform_uniform, IndicatorClass(), n_grid=(200, 2000), replications=200, master_seed=2)
        report = run_lln(config)
        assert report.statistics["median_largest_n"] < 0.5 * report.statistics["median_smallest_n"]


class TestCLT:
    def test_requires_assumption_b(self, uniform_uniform):
        config = CLTConfig(uniform_uniform, (indicator(0.5),), n=50, replications=5)
        with pytest.raises(AssumptionViolation) as info:
            run_clt(config)
        assert info.value.assumption == "B"

    def test_degenerate_coordinate(self, uniform_shifted):
        config = CLTConfig(uniform_shifted, (indicator(0.5), constant(1.0)), n=50, replications=5)
        with pytest.raises(DegenerateCoordinateError) as info:
            run_clt(config)
        assert info.value.phi_label == "constant(1)"

    def test_report_layout(self, uniform_shifted):
        config = CLTConfig(uniform_shifted, (indicator(0.3), indicator(0.6)), n=100, replications=20)
        report = run_clt(config)
        assert list(report.summary["phi"]) == ["indicator(0.3)", "indicator(0.6)"]
        assert {"g_n_0", "g_n_1", "remainder_0", "remainder_1"} <= set(report.replications.columns)
        assert len(report.statistics["covariance_theory"]) == 2

    @pytest.mark.slow
    def test_standardised_coordinates_are_normal(self, uniform_shifted):
        config = CLTConfig(uniform_shifted, (indicator(0.3), indicator(0.6)), n=400, replications=300, master_seed=3)
        report = run_clt(config, remainders=False)
        assert report.passed
        assert report.statistics["max_covariance_error"] < 0.1

    @pytest.mark.slow
    def test_median_indicator_ks_at_n_1000(self, uniform_shifted):
        config = CLTConfig(uniform_shifted, (indicator(0.5),), n=1000, replications=1000, master_seed=5)
        report = run_clt(config, remainders=False)
        assert report.summary["ks"].iloc[0] < 1.63 / 1000**0.5
        assert report.passed

    @pytest.mark.slow
    def test_quartile_pair_covariance_at_n_1000(self, uniform_shifted):
        config = CLTConfig(uniform_shifted, (indicator(0.25), indicator(0.75)), n=1000, replications=1000, master_seed=6)
        report = run_clt(config, remainders=False)
        assert report.statistics["max_covariance_error"] < 0.1


class TestContinuity:
    PHIS = (indicator(0.5), indicator(0.505), indicator(0.52), indicator(0.56))

    def test_needs_two_functions(self, uniform_shifted):
        with pytest.raises(ConfigError):
            probe_continuity(CLTConfig(uniform_shifted, (indicator(0.5),)))

    def test_needs_a_close_pair(self, uniform_shifted):
        config = CLTConfig(uniform_shifted, (indicator(0.1), indicator(0.9)), delta_grid=(0.4, 0.2, 0.1))
        with pytest.raises(ConfigError) as info:
            probe_continuity(config)
        assert info.value.field == "delta_grid"

    def test_pair_distances(self, uniform_shifted):
        distances = pair_distances(self.PHIS[:2], uniform_shifted)
        assert distances[0][:2] == (0, 1)
        assert distances[0][2] == pytest.approx(0.005**0.5, abs=1e-9)

    def test_table(self, uniform_shifted):
        config = CLTConfig(uniform_shifted, self.PHIS, n=200, replications=30, delta_grid=(0.1, 0.4, 0.2))
        report = run_continuity(config)
        table = report.summary
        assert list(table["delta"]) == [0.4, 0.2, 0.1]
        assert list(table["pairs"]) == sorted(table["pairs"], reverse=True)
        assert table["monotone_ok"].iloc[0]
        assert ((table["exceedance"] >= 0) & (table["exceedance"] <= 1)).all()

    @pytest.mark.slow
    def test_exceedance_nonincreasing_at_n_1000(self, uniform_shifted):
        config = CLTConfig(uniform_shifted, self.PHIS, n=1000, replications=500, master_seed=7, epsilon0=0.25)
        report = run_continuity(config)
        assert list(report.summary["delta"]) == [0.4, 0.2, 0.1]
        assert report.summary["monotone_ok"].all()
        assert report.passed


class TestAlpha:
    def test_acceptance_rate(self, uniform_uniform):
        report = estimate_alpha(uniform_uniform, population=2000, replications=20, master_seed=4)
        assert report.summary["alpha"].iloc[0] == pytest.approx(0.5, abs=1e-9)
        assert report.passed

    def test_provenance(self):
        assert provenance(7, "0.3.0") == {"seed": 7, "version": "0.3.0", "rng": "numpy.random.Philox"}


@pytest.mark.slow
def test_remainder_shrinks(uniform_shifted):
    report = run_decomposition(uniform_shifted, indicator(0.5), n_grid=(100, 3200), replications=40, master_seed=6)
    assert report.passed
