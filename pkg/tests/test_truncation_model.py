import math

import numpy as np
import pytest

from errors import NumericalFailure
from truncation_model import (
    TruncationModel,
    alpha,
    c_true,
    check_assumptions,
    exponential,
    f_star,
    g_star,
    h_star,
    integrate,
    inverse_g_probe,
    piecewise_linear,
    uniform,
    weibull,
)

FAMILIES = [
    uniform(0.0, 1.0),
    uniform(-0.5, 0.5),
    exponential(2.0),
    exponential(1.0, loc=-1.0),
    weibull(2.0, scale=1.5),
    piecewise_linear([(0.0, 0.0), (0.2, 0.5), (1.0, 1.0)]),
]


class TestIntegrate:
    def test_constant(self):
        assert integrate(lambda x: 1.0, 0.0, 1.0) == pytest.approx(1.0, abs=1e-12)

    def test_linear(self):
        assert integrate(lambda x: x, 0.0, 1.0) == pytest.approx(0.5, abs=1e-12)

    def test_endpoint_singularity(self):
        assert integrate(lambda x: x**-0.5, 0.0, 1.0) == pytest.approx(2.0, abs=1e-6)

    def test_reversed_limits(self):
        assert integrate(lambda x: x, 1.0, 0.0) == pytest.approx(-0.5, abs=1e-12)

    def test_divergence_is_numerical_failure(self):
        with pytest.raises(NumericalFailure) as info:
            integrate(lambda x: 1.0 / x, 0.0, 1.0)
        assert info.value.error_estimate is not None


@pytest.mark.parametrize("dist", FAMILIES, ids=lambda d: f"{d.name}{d.params}")
class TestDistributions:
    def test_quantile_inverts_cdf(self, dist):
        v = np.linspace(0.01, 0.99, 50)
        x = dist.quantile(v)
        assert np.allclose(dist.quantile(dist.cdf(x)), x, atol=1e-9)

    def test_cdf_nondecreasing_and_bounded(self, dist):
        x = np.linspace(dist.quantile(0.001) - 1.0, dist.quantile(0.999) + 1.0, 500)
        values = dist.cdf(x)
        assert np.all(np.diff(values) >= 0)
        assert values.min() >= 0.0 and values.max() <= 1.0

    def test_sf_complements_cdf(self, dist):
        x = dist.quantile(np.linspace(0.05, 0.95, 19))
        assert np.allclose(dist.cdf(x) + dist.sf(x), 1.0, atol=1e-12)

    def test_pdf_integrates_to_one(self, dist):
        knots = [k[0] for k in dist.params.get("knots", [])[1:-1]]
        total = integrate(dist.pdf, dist.support_lo, dist.support_hi, points=knots)
        assert total == pytest.approx(1.0, abs=1e-8)


class TestAlpha:
    def test_degenerate_below_is_one(self, degenerate_below):
        assert alpha(degenerate_below) == 1.0

    def test_uniform_uniform(self, uniform_uniform):
        assert alpha(uniform_uniform) == pytest.approx(0.5, abs=1e-9)

    def test_uniform_shifted(self, uniform_shifted):
        assert alpha(uniform_shifted) == pytest.approx(0.875, abs=1e-9)

    def test_cached(self, uniform_shifted):
        assert uniform_shifted.alpha_cache is None
        value = alpha(uniform_shifted)
        assert uniform_shifted.alpha_cache == value

    def test_disjoint_supports_fail(self, disjoint):
        with pytest.raises(NumericalFailure):
            alpha(disjoint)

    def test_exponential_against_closed_form(self):
        # P(Y >= T) = E[min(Y, 1)] for Y ~ Exp(1), T ~ U(0, 1)
        model = TruncationModel(exponential(1.0), uniform(0.0, 1.0))
        assert alpha(model) == pytest.approx(1.0 - math.exp(-1.0), abs=1e-9)


class TestMarginals:
    def test_f_star_below_support(self, uniform_uniform):
        assert f_star(uniform_uniform, -1.0) == 0.0

    def test_f_star_total_mass(self, uniform_uniform):
        assert f_star(uniform_uniform, 1.0) == 1.0

    def test_f_star_half(self, uniform_uniform):
        assert f_star(uniform_uniform, 0.5) == pytest.approx(0.25, abs=1e-9)

    def test_g_star_above_support(self, uniform_uniform):
        assert g_star(uniform_uniform, 2.0) == 1.0

    def test_g_star_half(self, uniform_uniform):
        assert g_star(uniform_uniform, 0.5) == pytest.approx(0.75, abs=1e-9)

    def test_g_star_below_support(self, uniform_uniform):
        assert g_star(uniform_uniform, -1.0) == 0.0

    def test_h_star_point(self, uniform_uniform):
        assert h_star(uniform_uniform, 0.5, 0.5) == pytest.approx(0.25, abs=1e-9)

    @pytest.mark.parametrize("y", [0.1, 0.4, 0.8])
    def test_h_star_marginalises_to_f_star(self, uniform_shifted, y):
        assert h_star(uniform_shifted, y, math.inf) == pytest.approx(f_star(uniform_shifted, y), abs=1e-8)

    @pytest.mark.parametrize("t", [-0.3, 0.0, 0.25])
    def test_h_star_marginalises_to_g_star(self, uniform_shifted, t):
        assert h_star(uniform_shifted, math.inf, t) == pytest.approx(g_star(uniform_shifted, t), abs=1e-8)

    @pytest.mark.parametrize("y", [-1.0, 0.5, math.inf])
    def test_h_star_infinite_t(self, uniform_uniform, y):
        assert h_star(uniform_uniform, y, -math.inf) == 0.0
        assert h_star(uniform_uniform, math.inf, math.inf) == 1.0

    def test_monotone_on_grid(self, uniform_shifted):
        grid = np.linspace(-0.6, 1.1, 100)
        fs = [f_star(uniform_shifted, x) for x in grid]
        gs = [g_star(uniform_shifted, x) for x in grid]
        hs = [h_star(uniform_shifted, x, 0.2) for x in grid]
        for values in (fs, gs, hs):
            assert np.all(np.diff(values) >= -1e-9)

    def test_h_star_below_f_star(self, uniform_shifted):
        for y in np.linspace(0.0, 1.0, 11):
            for t in np.linspace(-0.5, 0.5, 11):
                assert f_star(uniform_shifted, y) - h_star(uniform_shifted, y, t) >= -1e-12

    def test_risk_identity(self, uniform_shifted):
        for y in np.linspace(-0.45, 0.95, 29):
            gap = g_star(uniform_shifted, y) - f_star(uniform_shifted, y)
            assert gap == pytest.approx(c_true(uniform_shifted, y), abs=1e-7)


class TestRiskFunction:
    def test_shifted_half(self, uniform_shifted):
        assert c_true(uniform_shifted, 0.5) == pytest.approx(0.5 / 0.875, abs=1e-12)

    def test_zero_beyond_b_f(self, uniform_shifted):
        assert c_true(uniform_shifted, 1.0) == 0.0
        assert c_true(uniform_shifted, 3.0) == 0.0

    def test_uniform_half(self, uniform_uniform):
        assert c_true(uniform_uniform, 0.5) == pytest.approx(0.5, abs=1e-12)

    def test_vectorised(self, uniform_uniform):
        values = c_true(uniform_uniform, np.asarray([0.25, 0.5]))
        assert np.allclose(values, [2 * 0.25 * 0.75, 0.5])


class TestAssumptions:
    def test_shifted_satisfies_both(self, uniform_shifted):
        report = check_assumptions(uniform_shifted)
        assert report.a_holds and report.b_holds and report.weak_holds

    def test_uniform_uniform_only_a(self, uniform_uniform):
        report = check_assumptions(uniform_uniform)
        assert report.a_holds and not report.b_holds
        assert not report.weak_holds
        assert report.diagnostics["dF/G"]["converged"] is False

    def test_disjoint_fails_a(self, disjoint):
        assert not check_assumptions(disjoint).a_holds

    def test_point_mass_is_not_continuous(self, degenerate_below):
        report = check_assumptions(degenerate_below)
        assert not report.a_holds
        assert report.b_holds

    def test_weak_only(self, weak_only):
        report = check_assumptions(weak_only)
        assert not report.b_holds
        assert report.weak_holds


class TestInverseGProbe:
    def test_harmonic_divergence(self, uniform_uniform):
        assert not inverse_g_probe(uniform_uniform).converged

    def test_bounded_below_converges(self, uniform_shifted):
        probe = inverse_g_probe(uniform_shifted)
        assert probe.converged
        # integral of 1/(u + 0.5) over (0, 0.5) plus 0.5
        assert probe.value == pytest.approx(math.log(2.0) + 0.5, abs=1e-6)
