import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from mixent.density import (
    AffineMap,
    CustomProfile,
    ExponentialProfile,
    GaussianProfile,
    IsotropicGaussian,
    MixtureModel,
    Pushforward,
    SeparationCertificate,
    UniformBallProfile,
    affine_frame,
    component_entropy,
    gaussian_tail,
    load_model,
    log_pdf,
    mixture_complement,
    model_from_dict,
    separation_certificate,
    translation_mixture,
    uniform_interval,
    verify_separation,
)
from mixent.errors import InputError, UnsupportedError
from mixent.numerics import QuadratureSpec, integrate_1d, integrate_box

HALF_LOG_2PIE = 0.5 * math.log(2 * math.pi * math.e)


def quad_entropy(c, spec=QuadratureSpec(1e-11, 1e-11)):
    lo, hi = c.extent()

    def f(x):
        lp = c.logpdf(x)
        return np.where(np.isfinite(lp), -np.exp(lp) * np.where(np.isfinite(lp), lp, 0), 0)

    return integrate_box(f, list(zip(lo, hi)), spec, c.breakpoints()).value


class TestLogPdf:
    def test_standard_normal_at_zero(self):
        m = translation_mixture([0.0], 1.0)
        assert log_pdf(m, [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), abs=1e-15)

    @pytest.mark.parametrize("a", [0.3, 1.0, 5.0, 30.0])
    def test_symmetric_pair_at_origin(self, a):
        m = translation_mixture([-a, a], 1.0)
        assert log_pdf(m, [0.0]) == pytest.approx(-a * a / 2 - 0.5 * math.log(2 * math.pi), rel=1e-13)

    def test_zero_weight_rejected(self):
        g = IsotropicGaussian(1, [0.0], 1.0)
        with pytest.raises(InputError):
            MixtureModel([1.0, 0.0], [g, g])

    def test_weights_must_sum_to_one(self):
        g = IsotropicGaussian(1, [0.0], 1.0)
        with pytest.raises(InputError):
            MixtureModel([0.5, 0.5 + 1e-9], [g, g])

    def test_dimension_mismatch(self):
        with pytest.raises(InputError):
            log_pdf(translation_mixture([0.0], 1.0), [0.0, 1.0])

    def test_mixed_dimensions_rejected(self):
        with pytest.raises(InputError):
            MixtureModel([0.5, 0.5], [IsotropicGaussian(1, [0], 1), IsotropicGaussian(2, [0, 0], 1)])

    def test_far_point_is_finite(self):
        m = translation_mixture([0.0, 1.0], 0.1)
        assert np.isfinite(log_pdf(m, [1e3]))

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=5), st.floats(0.3, 3), st.floats(-8, 8))
    def test_matches_direct_sum(self, centers, sigma, z):
        m = translation_mixture(centers, sigma)
        direct = np.mean([stats.norm.pdf(z, c, sigma) for c in centers])
        assert math.exp(log_pdf(m, [z])) == pytest.approx(direct, rel=1e-12)


class TestNormalization:
    def test_one_dimensional(self):
        m = MixtureModel([0.2, 0.5, 0.3], [IsotropicGaussian(1, [-2], 0.5), IsotropicGaussian(1, [1], 2.0),
                                          uniform_interval(0, 3)])
        lo, hi = m.extent()
        assert integrate_1d(lambda x: m.pdf(x[:, None]), lo[0], hi[0], points=m.breakpoints()[0]).value \
            == pytest.approx(1.0, abs=1e-8)

    def test_two_dimensional(self):
        comps = [IsotropicGaussian(2, [0, 0], 1.0),
                 Pushforward(GaussianProfile(2), AffineMap([[2.0, 0.5], [0.0, 0.7]], [3.0, -1.0]))]
        m = MixtureModel([0.4, 0.6], comps)
        lo, hi = m.extent()
        assert integrate_box(m.pdf, list(zip(lo, hi))).value == pytest.approx(1.0, abs=1e-8)

    @pytest.mark.parametrize("profile", [ExponentialProfile(1, 0.7), ExponentialProfile(2), UniformBallProfile(2, 1.5)])
    def test_profiles_integrate_to_one(self, profile):
        assert integrate_1d(profile.radial_density, 0, math.inf, points=profile._pts(0)).value == pytest.approx(1.0, abs=1e-10)


class TestEntropy:
    def test_standard_normal(self):
        c = IsotropicGaussian(1, [0.0], 1.0)
        assert component_entropy(c) == pytest.approx(HALF_LOG_2PIE, abs=1e-15)
        assert abs(quad_entropy(c) - component_entropy(c)) <= 1e-8

    def test_mean_independent(self):
        assert component_entropy(IsotropicGaussian(1, [0.0], 1.0)) == component_entropy(IsotropicGaussian(1, [7.0], 1.0))

    def test_pushforward_scaling(self):
        c = Pushforward(GaussianProfile(1), AffineMap([[2.0]], [0.0]))
        assert component_entropy(c) == pytest.approx(HALF_LOG_2PIE + math.log(2), abs=1e-14)
        assert abs(quad_entropy(c) - component_entropy(c)) <= 1e-8

    @pytest.mark.parametrize("sigma", [0.3, 1.0, 2.5])
    def test_gaussian_2d_against_quadrature(self, sigma):
        c = IsotropicGaussian(2, [1.0, -1.0], sigma)
        assert abs(quad_entropy(c) - component_entropy(c)) <= 1e-8

    @pytest.mark.parametrize("profile,ref", [
        (ExponentialProfile(1, 2.0), 1 + math.log(4.0)),
        (UniformBallProfile(1, 1.5), math.log(3.0)),
        (UniformBallProfile(2, 1.0), math.log(math.pi)),
    ])
    def test_profile_entropies(self, profile, ref):
        assert profile.entropy() == pytest.approx(ref, rel=1e-13)

    def test_general_pushforward_against_quadrature(self):
        c = Pushforward(ExponentialProfile(2), AffineMap([[1.0, 0.3], [0.0, 0.5]], [0.0, 0.0]))
        assert abs(quad_entropy(c, QuadratureSpec(1e-9, 1e-9)) - component_entropy(c)) <= 1e-6

    def test_custom_profile_entropy_by_quadrature(self):
        logc = -math.log(2.0)
        p = CustomProfile(1, lambda r: logc - r, name="laplace")
        assert p.entropy() == pytest.approx(1 + math.log(2.0), abs=1e-9)


class TestGaussianTail:
    def test_examples(self):
        assert gaussian_tail(1, 0.0) == 1.0
        assert gaussian_tail(1, 1.0) == pytest.approx(0.31731, abs=1e-5)
        assert gaussian_tail(3, 0.0) == 1.0

    @pytest.mark.parametrize("d", [1, 2, 3, 5])
    def test_against_chi_distribution(self, d):
        for t in (0.1, 1.0, 2.5, 6.0):
            assert gaussian_tail(d, t) == pytest.approx(stats.chi(d).sf(t), rel=1e-11)

    @given(st.integers(1, 6), st.floats(0, 15), st.floats(0, 3))
    def test_non_increasing(self, d, t, dt):
        assert gaussian_tail(d, t + dt) <= gaussian_tail(d, t)

    def test_negative_rejected(self):
        with pytest.raises(InputError):
            gaussian_tail(1, -0.1)

    def test_profile_tail_falls_back_to_quadrature(self):
        p = CustomProfile(1, lambda r: -0.5 * r * r - 0.5 * math.log(2 * math.pi))
        assert p.tail(1.0) == pytest.approx(gaussian_tail(1, 1.0), abs=1e-10)


class TestComplement:
    def test_two_components_swap(self):
        m = translation_mixture([0.0, 3.0], 1.0)
        assert mixture_complement(m, 0).components == (m.components[1],)
        assert mixture_complement(m, 1).components == (m.components[0],)

    def test_three_equal_weights(self):
        m = translation_mixture([0.0, 1.0, 2.0], 1.0)
        c = mixture_complement(m, 0)
        assert np.allclose(c.weights, [0.5, 0.5])
        assert c.components == m.components[1:]

    def test_single_component_rejected(self):
        with pytest.raises(InputError):
            mixture_complement(translation_mixture([0.0], 1.0), 0)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0.1, 1), min_size=2, max_size=5), st.data())
    def test_remix_reproduces_density(self, raw, data):
        w = np.array(raw) / sum(raw)
        w[-1] = 1 - w[:-1].sum()
        m = MixtureModel(w, [IsotropicGaussian(1, [float(i)], 0.5 + 0.2 * i) for i in range(len(w))])
        j = data.draw(st.integers(0, len(w) - 1))
        c = mixture_complement(m, j)
        z = np.linspace(-4, 8, 50)[:, None]
        remix = w[j] * m.components[j].pdf(z) + (1 - w[j]) * c.pdf(z)
        assert np.allclose(remix, m.pdf(z), rtol=1e-12, atol=0)


class TestAffine:
    def test_tau_from_singular_values(self):
        a = AffineMap([[2.0, 0.0], [0.0, 0.5]], [0.0, 0.0])
        assert a.tau == pytest.approx(4.0)
        assert a.log_abs_det == pytest.approx(0.0, abs=1e-15)

    def test_singular_rejected(self):
        with pytest.raises(InputError):
            AffineMap([[1.0, 2.0], [2.0, 4.0]], [0.0, 0.0])

    def test_translations_have_unit_tau(self):
        frame = affine_frame(translation_mixture([0.0, 4.0, 9.0], 0.7))
        assert frame.tau == pytest.approx(1.0)
        assert isinstance(frame.profile, GaussianProfile) and frame.profile.sigma == pytest.approx(0.7)


class TestSeparation:
    def test_well_spaced_translations(self):
        lam = 0.8
        m = translation_mixture([0.0, 2 * lam, 4 * lam + 0.1], 1.0)
        assert verify_separation(m, SeparationCertificate(lam, 1, 1.0))

    def test_identical_components_fail(self):
        g = IsotropicGaussian(1, [0.0], 1.0)
        m = MixtureModel([0.5, 0.5], [g, g])
        for lam in (1e-6, 1.0, 10.0):
            assert not verify_separation(m, SeparationCertificate(lam, 1, 1.0))
        assert separation_certificate(m) is None

    @pytest.mark.parametrize("n", [2, 8, 50])
    def test_grid(self, n):
        lam = 0.5
        m = translation_mixture(2 * lam * np.arange(1, n + 1), 0.3)
        assert verify_separation(m, SeparationCertificate(lam, 1, 1.0))
        assert not verify_separation(m, SeparationCertificate(lam * 1.01, 1, 1.0))

    def test_larger_m_admits_closer_points(self):
        m = translation_mixture([0.0, 1.0, 10.0], 1.0)
        assert not verify_separation(m, SeparationCertificate(1.0, 1, 1.0))
        assert verify_separation(m, SeparationCertificate(1.0, 2, 1.0))

    def test_tau_must_dominate_frame(self):
        comps = [Pushforward(GaussianProfile(1), AffineMap([[1.0]], [0.0])),
                 Pushforward(GaussianProfile(1), AffineMap([[4.0]], [100.0]))]
        m = MixtureModel([0.5, 0.5], comps)
        # base rescaled by sqrt(1 * 4) = 2 leaves scales 1/2 and 2
        assert affine_frame(m).tau == pytest.approx(4.0)
        assert not verify_separation(m, SeparationCertificate(1.0, 1, 2.0))
        assert verify_separation(m, SeparationCertificate(1.0, 1, 4.0))

    def test_heterogeneous_bases_rejected(self):
        m = MixtureModel([0.5, 0.5], [IsotropicGaussian(1, [0], 1), uniform_interval(0, 1)])
        with pytest.raises(UnsupportedError):
            verify_separation(m, SeparationCertificate(1.0, 1, 1.0))

    @pytest.mark.parametrize("kwargs", [{"lam": 0, "m": 1}, {"lam": 1, "m": 0}, {"lam": 1, "m": 1, "tau": 0.5}])
    def test_certificate_invariants(self, kwargs):
        with pytest.raises(InputError):
            SeparationCertificate(**kwargs)


class TestJson:
    DOC = {"dim": 2, "weights": [0.25, 0.75], "components": [
        {"type": "gaussian", "mean": [0.0, 1.0], "sigma": 0.5},
        {"type": "pushforward", "base": "gaussian", "A": [[1.0, 0.0], [0.2, 2.0]], "b": [1.0, 1.0]},
    ]}

    def test_round_trip(self, tmp_path):
        path = tmp_path / "m.json"
        path.write_text(json.dumps(self.DOC))
        m = load_model(path)
        assert m.to_dict() == self.DOC

    @pytest.mark.parametrize("mutate", [
        lambda d: d.update(extra=1),
        lambda d: d["components"][0].update(colour="red"),
        lambda d: d["components"][1].update(base="cauchy"),
        lambda d: d["components"][0].update(type="student"),
        lambda d: d.update(weights=[0.5, 0.6]),
    ])
    def test_rejects_bad_documents(self, mutate):
        doc = json.loads(json.dumps(self.DOC))
        mutate(doc)
        with pytest.raises(InputError):
            model_from_dict(doc)

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(InputError):
            load_model(tmp_path / "missing.json")


class TestCustomProfile:
    def test_unnormalized_rejected(self):
        with pytest.raises(InputError):
            CustomProfile(1, lambda r: -r)

    def test_increasing_rejected(self):
        with pytest.raises(InputError):
            CustomProfile(1, lambda r: np.where(r < 1, -3.0, -0.4) - 0.0)
