import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from mixent.density import IsotropicGaussian, MixtureModel, Pushforward, AffineMap, GaussianProfile, uniform_interval
from mixent.divergence import (
    INFINITE,
    KL_GENERATOR,
    PEARSON_GENERATOR,
    TV_GENERATOR,
    ConvexGenerator,
    DensityPair,
    f_divergence,
    generalized_jsd,
    jsd,
    kl,
    reverse_pinsker_constant,
    skew_chi2,
    skew_divergence,
    skewed_generator,
    total_variation,
)
from mixent.errors import InputError
from mixent.numerics import McSpec, QuadratureSpec

TIGHT = QuadratureSpec(1e-12, 1e-12)


def gauss(m, s=1.0):
    return IsotropicGaussian(1, [float(m)], float(s))


def disjoint():
    return DensityPair(uniform_interval(0, 1), uniform_interval(2, 3))


def random_pairs(n, seed):
    rng = np.random.default_rng(seed)
    return [DensityPair(gauss(rng.uniform(-1, 1), rng.uniform(0.7, 1.3)),
                        gauss(rng.uniform(-1, 1), rng.uniform(0.7, 1.3))) for _ in range(n)]


def scipy_integral(fn):
    val, _ = integrate.quad(fn, -15, 15, epsabs=1e-13, epsrel=1e-13, limit=400)
    return val


class TestKL:
    def test_identical_is_zero(self):
        assert kl(DensityPair(gauss(0), gauss(0))).value == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("m", [0.5, 1.0, 2.0, 3.0])
    def test_mean_shift(self, m):
        assert abs(kl(DensityPair(gauss(0), gauss(m)), TIGHT).value - m * m / 2) <= 1e-8

    @pytest.mark.parametrize("s", [0.5, 2.0, 3.0])
    def test_scale_change(self, s):
        ref = math.log(s) + 1 / (2 * s * s) - 0.5
        assert abs(kl(DensityPair(gauss(0), gauss(0, s)), TIGHT).value - ref) <= 1e-8

    def test_undominated_is_flagged_infinite(self):
        est = kl(DensityPair(uniform_interval(0, 2), uniform_interval(0, 1)))
        assert est.value == math.inf and INFINITE in est.flags

    def test_dominated_uniform(self):
        est = kl(DensityPair(uniform_interval(0, 1), uniform_interval(0, 2)))
        assert est.value == pytest.approx(math.log(2), abs=1e-10)

    def test_two_dimensional(self):
        a = IsotropicGaussian(2, [0, 0], 1.0)
        b = IsotropicGaussian(2, [1, 1], 1.0)
        assert kl(DensityPair(a, b)).value == pytest.approx(1.0, abs=1e-8)

    def test_monte_carlo_in_three_dimensions(self):
        a = IsotropicGaussian(3, [0, 0, 0], 1.0)
        b = IsotropicGaussian(3, [1, 0, 0], 1.0)
        est = kl(DensityPair(a, b), McSpec(seed=3, samples=200_000))
        assert est.method == "mc"
        assert abs(est.value - 0.5) <= 5 * est.error


class TestTotalVariation:
    @pytest.mark.parametrize("a", [0.1, 0.5, 1.0, 2.0])
    def test_symmetric_gaussians(self, a):
        est = total_variation(DensityPair(gauss(-a), gauss(a)))
        ref = stats.norm.cdf(a) - stats.norm.cdf(-a)
        assert est.method == "closed-form"
        assert est.value == pytest.approx(ref, abs=1e-14)

    def test_reference_value(self):
        assert total_variation(DensityPair(gauss(-1), gauss(1))).value == pytest.approx(0.68269, abs=1e-5)

    @pytest.mark.parametrize("a", [0.3, 1.0, 2.5])
    def test_closed_form_matches_quadrature(self, a):
        # a pushforward of the Gaussian profile takes the quadrature route
        mu = Pushforward(GaussianProfile(1), AffineMap([[1.0]], [-a]))
        nu = Pushforward(GaussianProfile(1), AffineMap([[1.0]], [a]))
        quad = total_variation(DensityPair(mu, nu), TIGHT)
        assert quad.method != "closed-form"
        assert abs(quad.value - total_variation(DensityPair(gauss(-a), gauss(a))).value) <= 1e-9

    def test_symmetric_in_arguments(self):
        p = DensityPair(gauss(0, 1), gauss(1, 2))
        assert total_variation(p).value == pytest.approx(total_variation(p.swapped()).value, abs=1e-9)

    def test_mixture_argument(self):
        m = MixtureModel([0.5, 0.5], [gauss(-1), gauss(1)])
        est = total_variation(DensityPair(m, gauss(0)))
        ref = 0.5 * scipy_integral(lambda x: abs(0.5 * stats.norm.pdf(x, -1) + 0.5 * stats.norm.pdf(x, 1)
                                                  - stats.norm.pdf(x)))
        assert est.value == pytest.approx(ref, abs=1e-8)
        assert 0 <= est.value <= 1


class TestSkewDivergence:
    def test_t_one_is_zero(self):
        assert skew_divergence(DensityPair(gauss(0), gauss(5)), 1.0).value == 0.0

    def test_t_zero_is_kl(self):
        p = DensityPair(gauss(0), gauss(2))
        assert skew_divergence(p, 0.0).value == kl(p).value

    @pytest.mark.parametrize("t", [0.1, 0.5, 0.9])
    def test_identical_is_zero(self, t):
        assert skew_divergence(DensityPair(gauss(0), gauss(0)), t).value == pytest.approx(0, abs=1e-12)

    @pytest.mark.parametrize("t", [-0.1, 1.5, math.nan])
    def test_rejects_bad_t(self, t):
        with pytest.raises(InputError):
            skew_divergence(DensityPair(gauss(0), gauss(1)), t)

    @pytest.mark.parametrize("t", [0.1, 0.25, 0.5, 0.9])
    def test_disjoint_support(self, t):
        assert abs(skew_divergence(disjoint(), t).value + math.log(t)) <= 1e-10

    def test_matches_direct_integral(self):
        t = 0.3
        ref = scipy_integral(lambda x: stats.norm.pdf(x) * math.log(
            stats.norm.pdf(x) / (t * stats.norm.pdf(x) + (1 - t) * stats.norm.pdf(x, 1.5, 0.8))))
        assert skew_divergence(DensityPair(gauss(0), gauss(1.5, 0.8)), t, TIGHT).value == pytest.approx(ref, abs=1e-9)

    @pytest.mark.parametrize("pair", random_pairs(4, 11))
    def test_bounded_by_minus_log_t(self, pair):
        for t in (0.05, 0.3, 0.7):
            assert skew_divergence(pair, t).value <= -math.log(t)

    @pytest.mark.parametrize("pair", random_pairs(3, 12))
    def test_non_increasing_and_convex_in_t(self, pair):
        ts = np.linspace(0.05, 0.95, 13)
        s = np.array([skew_divergence(pair, t, TIGHT).value for t in ts])
        assert np.all(np.diff(s) <= 1e-12)
        assert np.all(s[1:-1] <= 0.5 * (s[:-2] + s[2:]) + 1e-12)


class TestSkewChi2:
    @pytest.mark.parametrize("m", [0.5, 1.0, 2.0])
    def test_pearson_endpoint(self, m):
        est = skew_chi2(DensityPair(gauss(0), gauss(m)), 0.0, TIGHT)
        assert est.value == pytest.approx(math.expm1(m * m), rel=1e-9)

    def test_neyman_endpoint(self):
        p = DensityPair(gauss(0), gauss(1.0, 0.9))
        ref = scipy_integral(lambda x: (stats.norm.pdf(x) - stats.norm.pdf(x, 1, 0.9)) ** 2 / stats.norm.pdf(x))
        assert skew_chi2(p, 1.0, TIGHT).value == pytest.approx(ref, rel=1e-8)

    @pytest.mark.parametrize("t", [0.1, 0.5, 0.8])
    def test_disjoint_support(self, t):
        assert abs(skew_chi2(disjoint(), t).value - 1 / (t * (1 - t))) <= 1e-10

    @pytest.mark.parametrize("t", [0.0, 1.0])
    def test_undominated_endpoints_are_infinite(self, t):
        est = skew_chi2(disjoint(), t)
        assert est.value == math.inf and INFINITE in est.flags

    def test_pearson_against_lighter_tail_is_infinite(self):
        est = skew_chi2(DensityPair(gauss(0), gauss(0.0, 0.625)), 0.0)
        assert est.value == math.inf and INFINITE in est.flags

    def test_pearson_against_heavier_tail_is_finite(self):
        # chi^2(N(0,1) || N(0,s^2)) = s / sqrt(2 - 1/s^2) - 1 for s^2 > 1/2
        s = 1.5
        est = skew_chi2(DensityPair(gauss(0), gauss(0.0, s)), 0.0, TIGHT)
        assert est.value == pytest.approx(s**2 / math.sqrt(2 * s**2 - 1) - 1, rel=1e-9)

    def test_identical_is_zero(self):
        assert skew_chi2(DensityPair(gauss(1), gauss(1)), 0.4).value == pytest.approx(0.0, abs=1e-14)

    @settings(max_examples=15, deadline=None)
    @given(st.floats(-1.5, 1.5), st.floats(0.6, 1.5), st.floats(0.0, 1.0))
    def test_argument_swap_symmetry(self, m, s, t):
        # 1 - t must round-trip exactly, otherwise the two sides use different t
        assume(1.0 - (1.0 - t) == t)
        p = DensityPair(gauss(0), gauss(m, s))
        a, b = skew_chi2(p, t, TIGHT).value, skew_chi2(p.swapped(), 1 - t, TIGHT).value
        assert a == b or abs(a - b) <= 1e-8


class TestSkewRelations:
    @pytest.mark.parametrize("pair", random_pairs(3, 21))
    @pytest.mark.parametrize("t", [0.2, 0.5, 0.8])
    def test_derivative_identity(self, pair, t):
        h = 1e-4
        slope = (skew_divergence(pair, t + h, TIGHT).value - skew_divergence(pair, t - h, TIGHT).value) / (2 * h)
        assert abs(slope - (t - 1) * skew_chi2(pair, t, TIGHT).value) <= 1e-5

    @pytest.mark.parametrize("pair", random_pairs(4, 22))
    @pytest.mark.parametrize("t", [0.1, 0.5, 0.9])
    def test_inequality_chain(self, pair, t):
        s = skew_divergence(pair, t).value
        c = skew_chi2(pair, t).value
        tv = total_variation(pair).value
        assert s <= (1 - t) ** 2 * c + 1e-9
        assert c <= tv / (t * (1 - t)) + 1e-9
        assert s <= -math.log(t) * tv + 1e-9

    @pytest.mark.parametrize("pair", random_pairs(5, 23))
    def test_lin_bound(self, pair):
        assert jsd(pair).value <= total_variation(pair).value * math.log(2) + 1e-12


class TestJSD:
    def test_disjoint(self):
        assert abs(jsd(disjoint()).value - math.log(2)) <= 1e-10

    def test_identical(self):
        assert jsd(DensityPair(gauss(0), gauss(0))).value == pytest.approx(0, abs=1e-12)

    def test_symmetric_and_bounded(self):
        p = DensityPair(gauss(0, 0.5), gauss(2, 1.4))
        v = jsd(p).value
        assert 0 <= v <= math.log(2)
        assert v == pytest.approx(jsd(p.swapped()).value, abs=1e-10)

    def test_is_average_of_half_skews(self):
        p = DensityPair(gauss(0), gauss(1.3, 0.7))
        avg = 0.5 * (skew_divergence(p, 0.5).value + skew_divergence(p.swapped(), 0.5).value)
        assert jsd(p).value == pytest.approx(avg, abs=1e-9)


class TestGeneralizedJSD:
    def test_collapses_to_jsd(self):
        p = DensityPair(gauss(0), gauss(1.5))
        assert generalized_jsd(p, [0, 1], [0.5, 0.5]).value == pytest.approx(jsd(p).value, abs=1e-10)

    def test_equal_alphas_give_zero(self):
        p = DensityPair(gauss(0), gauss(1.5))
        assert generalized_jsd(p, [0.3, 0.3, 0.3], [0.2, 0.3, 0.5]).value == pytest.approx(0, abs=1e-14)

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_skewed_generator_composition(self, seed):
        rng = np.random.default_rng(seed)
        alpha = rng.uniform(0, 1, 3)
        w = rng.dirichlet(np.ones(3))
        w[-1] = 1 - w[:-1].sum()
        p = DensityPair(gauss(0), gauss(1.2, 0.8))
        abar = float(w @ alpha)
        # D((1-a) mu + a nu || (1-abar) mu + abar nu) with r = 1-a, t = 1-abar
        parts = [wi * f_divergence(p, skewed_generator(KL_GENERATOR, 1 - ai, 1 - abar), TIGHT).value
                 for ai, wi in zip(alpha, w)]
        g = generalized_jsd(p, alpha, w, TIGHT).value
        assert g >= 0
        assert abs(g - math.fsum(parts)) <= 1e-6

    @pytest.mark.parametrize("alpha,w", [([0.5], [0.9]), ([0.1, 0.2], [1.0]), ([1.5, 0], [0.5, 0.5]),
                                         ([0, 1], [0, 1]), ([], [])])
    def test_invalid_inputs(self, alpha, w):
        with pytest.raises(InputError):
            generalized_jsd(DensityPair(gauss(0), gauss(1)), alpha, w)


class TestGenerators:
    def test_rejects_nonzero_at_one(self):
        with pytest.raises(InputError):
            ConvexGenerator(lambda x: x * x, "sq")

    def test_rejects_concave(self):
        with pytest.raises(InputError):
            ConvexGenerator(lambda x: -np.log(x) * -1.0, "log")

    def test_identity_skew(self):
        g = skewed_generator(PEARSON_GENERATOR, 1.0, 0.0)
        x = np.geomspace(1e-3, 1e3, 25)
        assert np.allclose(g(x), PEARSON_GENERATOR(x), rtol=1e-15, atol=0)

    @pytest.mark.parametrize("t", [0.2, 0.6])
    def test_kl_skew_is_skew_divergence_generator(self, t):
        g = skewed_generator(KL_GENERATOR, 1.0, t)
        x = np.geomspace(1e-3, 1e3, 25)
        assert np.allclose(g(x), x * np.log(x / (t * x + 1 - t)), rtol=1e-13, atol=1e-15)
        p = DensityPair(gauss(0), gauss(1))
        assert f_divergence(p, g).value == pytest.approx(skew_divergence(p, t).value, abs=1e-9)

    @pytest.mark.parametrize("t", [0.2, 0.6])
    def test_pearson_skew_scales_chi2(self, t):
        p = DensityPair(gauss(0), gauss(0.8, 1.1))
        val = f_divergence(p, skewed_generator(PEARSON_GENERATOR, 1.0, t)).value
        assert val == pytest.approx((1 - t) ** 2 * skew_chi2(p, t).value, rel=1e-8)

    def test_infinite_skew_rejected(self):
        steep = ConvexGenerator(lambda x: np.exp(x) - np.e, "exp")
        with pytest.raises(InputError):
            skewed_generator(steep, 1.0, 0.0)
        # any interior t tames the growth
        skewed_generator(steep, 1.0, 0.5)

    def test_tv_generator(self):
        p = DensityPair(gauss(-1), gauss(1))
        assert f_divergence(p, TV_GENERATOR).value == pytest.approx(total_variation(p).value, abs=1e-9)

    def test_kl_generator_matches_kl(self):
        p = DensityPair(gauss(0), gauss(2))
        assert f_divergence(p, KL_GENERATOR).value == pytest.approx(2.0, abs=1e-8)

    def test_f_divergence_undominated(self):
        est = f_divergence(DensityPair(uniform_interval(0, 2), uniform_interval(0, 1)), KL_GENERATOR)
        assert est.value == math.inf and INFINITE in est.flags


class TestReversePinsker:
    @pytest.mark.parametrize("beta", [0.2, 0.5])
    @pytest.mark.parametrize("seed", range(5))
    def test_holds_for_constructed_pairs(self, beta, seed):
        rng = np.random.default_rng(seed)
        mu = gauss(rng.uniform(-2, 2), rng.uniform(0.5, 1.5))
        nu = gauss(rng.uniform(-2, 2), rng.uniform(0.5, 1.5))
        # gamma = beta mu + (1 - beta) nu gives dmu/dgamma <= 1/beta everywhere
        gamma = MixtureModel([beta, 1 - beta], [mu, nu])
        pair = DensityPair(mu, gamma)
        x = np.linspace(-10, 10, 2001)[:, None]
        assert np.all(mu.pdf(x) <= gamma.pdf(x) / beta * (1 + 1e-12))
        assert total_variation(pair).value >= reverse_pinsker_constant(beta) * kl(pair).value - 1e-12

    @pytest.mark.parametrize("beta", [0.0, 1.0, -1.0])
    def test_domain(self, beta):
        with pytest.raises(InputError):
            reverse_pinsker_constant(beta)


class TestPairs:
    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            DensityPair(gauss(0), IsotropicGaussian(2, [0, 0], 1))

    def test_rejects_foreign_objects(self):
        with pytest.raises(InputError):
            DensityPair(gauss(0), stats.norm())

    def test_mc_is_deterministic(self):
        a = IsotropicGaussian(3, [0, 0, 0], 1.0)
        b = IsotropicGaussian(3, [0.5, 0, 0], 1.2)
        p = DensityPair(a, b)
        one = jsd(p, McSpec(seed=9, samples=50_000, chunks=1))
        many = jsd(p, McSpec(seed=9, samples=50_000, chunks=8))
        assert one == many


class TestTwoDimensionalTV:
    @pytest.mark.parametrize("shift", [0.5, 2.0, 5.0])
    def test_matches_closed_form(self, shift):
        from mixent.density import AffineMap, GaussianProfile, Pushforward
        a = Pushforward(GaussianProfile(2), AffineMap(np.eye(2), [0.0, 0.0]))
        b = Pushforward(GaussianProfile(2), AffineMap(np.eye(2), [shift * 0.6, shift * 0.8]))
        est = total_variation(DensityPair(a, b))
        assert abs(est.value - (2 * stats.norm.cdf(shift / 2) - 1)) <= max(est.error, 1e-10)
