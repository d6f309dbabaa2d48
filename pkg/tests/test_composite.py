import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from claimtail.composite import (
    CompositeModel,
    PMode,
    build_composite,
    composite_cdf,
    composite_pdf,
    composite_quantile,
    fit_composite,
    from_record,
    model_digest,
    p_below_empirical,
    p_below_theoretical,
    sample_composite,
    to_record,
)
from claimtail.distributions import DistributionSpec, DomainError, cdf, pdf, quantile
from claimtail.fitting import BulkFit, FitMode, TailFit, fit_bulk
from claimtail.tailselect import select

GAMMA = DistributionSpec("gamma", 10, 1)
PARETO = DistributionSpec("pareto2", 2.5, 75)
B92 = float(quantile(GAMMA, 0.92))


@pytest.fixture
def model():
    return CompositeModel(GAMMA, PARETO, B92, 0.92)


def quad_mass(m):
    lo = 1.0 if m.bulk.family.value == "loggamma" else 0.0
    below, _ = integrate.quad(lambda z: composite_pdf(m, z), lo, m.b, epsabs=1e-13, epsrel=1e-12, limit=200)
    # excess mapped to (0, 1]: z = b + beta (1/t - 1)
    s = m.tail.param2
    above, _ = integrate.quad(lambda t: composite_pdf(m, m.b + s * (1 / t - 1)) * s / t ** 2, 0, 1,
                              epsabs=1e-13, epsrel=1e-12, limit=200)
    return below, above


random_models = st.builds(
    lambda fam, p1, p2, q, p, a, s: CompositeModel(
        DistributionSpec(fam, p1, p2), DistributionSpec("pareto2", a, s),
        float(quantile(DistributionSpec(fam, p1, p2), q)), p),
    st.sampled_from(["gamma", "lognormal", "weibull", "loggamma"]),
    st.floats(0.5, 8), st.floats(0.3, 4), st.floats(0.5, 0.99), st.floats(0.05, 0.98),
    st.floats(0.8, 5), st.floats(0.5, 100),
)


class TestDensity:
    def test_density_just_above_b(self, model):
        assert composite_pdf(model, B92 * (1 + 1e-12)) == pytest.approx(0.08 * 2.5 / 75, rel=1e-9)

    def test_cdf_at_b(self, model):
        assert composite_cdf(model, B92) == 0.92

    def test_tail_median(self, model):
        z = B92 + 75 * (2 ** (1 / 2.5) - 1)
        assert composite_cdf(model, z) == pytest.approx(0.92 + 0.04, rel=1e-13)

    def test_mass_split(self, model):
        below, above = quad_mass(model)
        assert below == pytest.approx(0.92, abs=1e-8)
        assert above == pytest.approx(0.08, abs=1e-8)

    @settings(max_examples=20, deadline=None)
    @given(random_models)
    def test_normalisation_random(self, m):
        below, above = quad_mass(m)
        assert below + above == pytest.approx(1.0, abs=1e-8)
        assert below == pytest.approx(m.p_below, abs=1e-8)

    def test_domain(self, model):
        with pytest.raises(DomainError):
            composite_pdf(model, 0.0)
        with pytest.raises(DomainError):
            composite_cdf(model, -2.0)

    def test_reduces_to_plain_bulk(self):
        # theoretical p with a plainly fitted bulk: below b the density is the raw bulk pdf
        z = np.random.default_rng(0).gamma(10, 1, 3000)
        b = float(np.quantile(z, 0.9))
        bulk = fit_bulk(z[z <= b], "gamma", b, FitMode.PLAIN)
        p = p_below_theoretical(bulk, b)
        m = build_composite(bulk, TailFit(2.5, 75, b, 10, 0.0), p, p_mode="theoretical")
        grid = np.linspace(0.5, b, 50)
        np.testing.assert_allclose(composite_pdf(m, grid), pdf(bulk.spec, grid), rtol=1e-10)

    def test_continuous_when_p_is_bulk_cdf(self):
        m = CompositeModel(GAMMA, PARETO, B92, float(cdf(GAMMA, B92)))
        assert composite_cdf(m, B92 * (1 + 1e-12)) == pytest.approx(composite_cdf(m, B92), abs=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(random_models, st.lists(st.floats(1.001, 1e4), min_size=2, max_size=30))
    def test_cdf_monotone(self, m, zs):
        v = composite_cdf(m, np.sort(zs))
        assert np.all(np.diff(v) >= -1e-15)
        assert np.all((v >= 0) & (v <= 1))

    @settings(max_examples=30, deadline=None)
    @given(random_models, st.floats(0.001, 0.999))
    def test_quantile_round_trip(self, m, u):
        assert composite_cdf(m, composite_quantile(m, u)) == pytest.approx(u, abs=1e-9)


class TestBuild:
    def test_mismatch(self):
        bulk = BulkFit(GAMMA, 10.0, FitMode.TRUNCATED, 0.0, True)
        with pytest.raises(ValueError):
            build_composite(bulk, TailFit(2.5, 75, 11.0, 10, 0.0), 0.9)

    def test_invalid_p(self):
        with pytest.raises(ValueError):
            CompositeModel(GAMMA, PARETO, B92, 1.2)

    def test_tail_family(self):
        with pytest.raises(ValueError):
            CompositeModel(GAMMA, GAMMA, B92, 0.5)


class TestPBelow:
    def test_empirical(self):
        z = np.arange(1, 101, dtype=float)
        assert p_below_empirical(z, 95.0) == 0.95
        assert p_below_empirical(z, 0.5) == 0.0

    @pytest.mark.parametrize("method", ["m1", "m2", "m3"])
    def test_consistent_with_selector(self, method):
        z = np.random.default_rng(1).lognormal(0, 1, 1000)
        est = select(z, method)
        assert p_below_empirical(z, est.b_hat) == est.index / z.size

    def test_ties_count_below(self):
        assert p_below_empirical([1.0, 2.0, 2.0, 3.0], 2.0) == 0.75

    def test_theoretical(self):
        assert p_below_theoretical(GAMMA, B92) == pytest.approx(0.92, abs=1e-12)
        assert p_below_theoretical(GAMMA, math.inf) == 1.0

    def test_theoretical_requires_convergence(self):
        with pytest.raises(ValueError):
            p_below_theoretical(BulkFit(GAMMA, 10.0, FitMode.TRUNCATED, 0.0, False), 10.0)

    def test_fit_composite_clamp(self):
        # threshold far above the bulk: the fitted bulk puts essentially all mass below b
        z = np.concatenate([np.random.default_rng(2).gamma(10, 1, 198), [1e6, 2e6]])
        fit = fit_composite(z, 100.0, "gamma", "theoretical", clamp=True)
        assert fit.p_raw > 200 / 201
        assert fit.model.p_below == 200 / 201
        plain = fit_composite(z, 100.0, "gamma", "empirical", clamp=True)
        assert plain.model.p_below == plain.p_raw == 198 / 200


class TestSampling:
    def test_p_one_all_below(self, model):
        x = sample_composite(model.with_p(1.0), np.random.default_rng(0), 1000)
        assert x.max() <= B92

    def test_p_zero_all_above(self, model):
        x = sample_composite(model.with_p(0.0), np.random.default_rng(0), 1000)
        assert x.min() > B92

    def test_fraction_below(self, model):
        x = sample_composite(model, np.random.default_rng(1), 10 ** 6)
        assert abs(np.mean(x <= B92) - 0.92) < 0.002

    @pytest.mark.parametrize("fam,p", [("gamma", (10, 1)), ("lognormal", (1.5, 1.27)),
                                       ("weibull", (2, 11.28)), ("loggamma", (6, 3.04))])
    def test_dkw_band(self, fam, p):
        bulk = DistributionSpec(fam, *p)
        m = CompositeModel(bulk, PARETO, float(quantile(bulk, 0.92)), 0.92)
        x = np.sort(sample_composite(m, np.random.default_rng(2), 10 ** 5))
        n = x.size
        f = composite_cdf(m, x)
        d = max(np.max(np.arange(1, n + 1) / n - f), np.max(f - np.arange(n) / n))
        assert d < math.sqrt(math.log(2 / 0.001) / (2 * n))

    def test_count(self, model):
        with pytest.raises(ValueError):
            sample_composite(model, np.random.default_rng(0), 0)


class TestRecord:
    def test_round_trip(self, model):
        text = to_record(model)
        again = from_record(text)
        assert to_record(again) == text
        assert "b=14.7048505382\n" in text
        assert model_digest(again) == model_digest(model)

    def test_twelve_digits(self):
        m = CompositeModel(DistributionSpec("lognormal", 1 / 3, 2 / 3), PARETO, 10.0, 0.9, PMode.EMPIRICAL)
        text = to_record(m)
        assert "bulk_param1=0.333333333333\n" in text and "p_mode=empirical\n" in text

    def test_missing_field(self):
        with pytest.raises(ValueError):
            from_record("bulk_family=gamma\n")
