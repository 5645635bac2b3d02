import numpy as np
import pytest

from errors import EmptySampleError
from metrics import (
    exceedance_frequency,
    ks_critical_value,
    ks_pvalue,
    ks_statistic,
    max_abs_difference,
    standard_normal_ks,
    summarize,
)


def uniform_cdf(x):
    return np.clip(np.asarray(x, dtype=float), 0.0, 1.0)


class TestKS:
    def test_single_point(self):
        assert ks_statistic([0.5], uniform_cdf) == 0.5

    @pytest.mark.parametrize("m", [1, 4, 10, 250])
    def test_midpoint_staircase(self, m):
        sample = (np.arange(m) + 0.5) / m
        assert ks_statistic(sample, uniform_cdf) == pytest.approx(0.5 / m, abs=1e-12)

    def test_ties_counted_once(self):
        assert ks_statistic([0.5, 0.5], uniform_cdf) == 0.5

    def test_empty(self):
        with pytest.raises(EmptySampleError):
            ks_statistic([], uniform_cdf)

    def test_critical_value(self):
        assert ks_critical_value(100) == pytest.approx(0.163)
        assert ks_critical_value(400, constant=1.36) == pytest.approx(0.068)

    def test_pvalue_bounds(self):
        assert ks_pvalue(0.0, 100) == pytest.approx(1.0)
        assert ks_pvalue(0.163, 100) == pytest.approx(0.01, abs=1e-3)

    def test_normal_sample(self):
        values = np.random.default_rng(0).standard_normal(5000)
        assert standard_normal_ks(values) < ks_critical_value(5000)


class TestSummaries:
    def test_summarize_keys(self):
        out = summarize([1.0, 2.0, 3.0, 4.0])
        assert out["count"] == 4
        assert out["mean"] == 2.5
        assert out["q50"] == 2.5
        assert out["q90"] == pytest.approx(3.7)
        assert out["std"] == pytest.approx(np.std([1, 2, 3, 4], ddof=1))

    def test_summarize_single_value(self):
        assert summarize([3.0])["std"] == 0.0

    def test_exceedance(self):
        p, se = exceedance_frequency([True, False, False, True])
        assert p == 0.5
        assert se == pytest.approx(0.25)

    def test_exceedance_empty(self):
        assert exceedance_frequency([]) == (0.0, 0.0)

    def test_max_abs_difference(self):
        assert max_abs_difference([1.0, 2.0], [1.5, 1.0]) == 1.0
