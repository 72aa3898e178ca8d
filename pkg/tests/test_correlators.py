import math
from functools import lru_cache

import numpy as np
import pytest

from correlators import (
    PROFILES,
    GaussianTestFunction,
    QuadratureConfig,
    StripPoint,
    boundary_value_massless,
    clustering_metric,
    clustering_ratio,
    convolved_spectrum,
    eval_strip,
    get_profile,
    image_sum_massless,
    midstrip_defect,
    panel_quadrature,
    sampled_time_spectrum,
    smeared_boundary,
    smeared_strip,
    time_restriction,
    vacuum_massless,
)
from equilibrium_analysis import MASSIVE_CLUSTERING_BOUND, MASSIVE_CLUSTERING_SMOOTHING
from errors import ConfigError, DomainError, SingularityError
from minkowski import FourVector, InverseTemperatureVector, boosted_time_direction
from spectral_kernels import KMS, Vacuum


# -- Helpers --

def strip_value(spec, z, sigma, beta_vec, config):
    return eval_strip(spec, FourVector(1.0, 0.0, 0.0, 0.0), StripPoint(z, sigma, beta_vec), config).value


def random_test_functions(count, seed=17):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        powers = tuple(int(a) for a in rng.integers(0, 2, size=4))
        out.append(
            GaussianTestFunction(
                center=FourVector(*rng.uniform(-0.5, 0.5, size=4)),
                width=float(rng.uniform(0.8, 1.2)),
                coefficients={(0, 0, 0, 0): 1.0, powers: float(rng.normal())},
            )
        )
    return out


class TestQuadratureConfig:
    def test_presets(self):
        assert PROFILES["default"].tolerance == 1e-8
        assert PROFILES["fast"].tolerance == 1e-4
        assert PROFILES["strict"].tolerance == 1e-10

    def test_cutoff_guard(self):
        with pytest.raises(ConfigError):
            QuadratureConfig(k_max_beta=20.0, tolerance=1e-8)

    def test_unknown_profile(self):
        with pytest.raises(ConfigError):
            get_profile("turbo")

    def test_environment_override(self, monkeypatch):
        monkeypatch.setenv("THERMALFIELD_PROFILE", "strict")
        assert get_profile().name == "strict"
        assert get_profile("fast").name == "fast"


class TestPanelQuadrature:
    def test_scalar(self):
        value, error = panel_quadrature(np.sin, 0.0, math.pi, 0.5, 16)
        assert value == pytest.approx(2.0, abs=1e-14)
        assert error < 1e-10

    def test_vector_valued(self):
        value, _ = panel_quadrature(lambda x: np.stack([x, x * x], axis=-1), 0.0, 1.0, 0.25, 8)
        assert value == pytest.approx([0.5, 1.0 / 3.0])

    def test_empty_interval(self):
        assert panel_quadrature(np.sin, 1.0, 1.0, 0.5, 8) == (0.0, 0.0)


class TestStripValues:
    def test_vacuum_matches_closed_form(self, profile):
        z = FourVector(0.3, 0.5, 0.0, 0.0)
        beta = InverseTemperatureVector(2.0)
        assert strip_value(Vacuum(), z, 0.5, beta, profile) == pytest.approx(vacuum_massless(z, 0.5), rel=1e-6)

    @pytest.mark.parametrize("sigma", [0.2, 0.5, 0.8])
    def test_kms_matches_image_sum(self, profile, sigma):
        beta = InverseTemperatureVector(1.0)
        z = FourVector(0.3, 0.4, 0.0, 0.0)
        expected = image_sum_massless(beta, z, sigma)
        assert strip_value(KMS(beta), z, sigma, beta, profile) == pytest.approx(expected, rel=1e-6)

    def test_boundary_pairing(self, profile):
        # F(z, beta - sigma) == F(-z, sigma)
        beta = InverseTemperatureVector(1.0)
        spec = KMS(beta, mass=0.7)
        z = FourVector(0.3, 0.2, 0.1, 0.0)
        upper = strip_value(spec, z, 0.7, beta, profile)
        lower = strip_value(spec, -z, 0.3, beta, profile)
        assert upper == pytest.approx(lower, rel=1e-6)

    @pytest.mark.parametrize("sigma", [0.0, 1.0, 1.5])
    def test_strip_point_bounds(self, sigma):
        with pytest.raises(DomainError):
            StripPoint(FourVector.zero(), sigma, InverseTemperatureVector(1.0))

    def test_holomorphic_in_time_and_shift(self, profile):
        # d/dsigma F + i d/dt F = 0 for F(t - i sigma, x)
        beta = InverseTemperatureVector(1.0)
        spec = KMS(beta, mass=0.7)
        t, x, sigma, h = 0.3, 0.4, 0.5, 3e-3

        def F(t, sigma):
            return strip_value(spec, FourVector(t, x, 0.0, 0.0), sigma, beta, profile)

        d_t = (F(t + h, sigma) - F(t - h, sigma)) / (2 * h)
        d_sigma = (F(t, sigma + h) - F(t, sigma - h)) / (2 * h)
        assert abs(d_sigma + 1j * d_t) < 1e-4 * abs(d_t)

    def test_polynomially_bounded(self, profile):
        beta = InverseTemperatureVector(1.0)
        radii = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
        values = [abs(strip_value(KMS(beta), FourVector(0.5 * r, r, 0.0, 0.0), 0.5, beta, profile)) for r in radii]
        slope = np.polyfit(np.log(radii), np.log(values), 1)[0]
        assert slope <= 2.0

    def test_vacuum_limit_on_spacelike_axis(self, profile):
        beta = InverseTemperatureVector(1.0)
        z = FourVector(0.0, 1.0, 0.0, 0.0)
        values = []
        for sigma in (0.4, 0.2, 0.1):
            value = strip_value(Vacuum(), z, sigma, beta, profile)
            assert value == pytest.approx(1.0 / (4 * math.pi ** 2 * (1 + sigma ** 2)), rel=1e-6)
            values.append(value.real)
        assert values[0] < values[1] < values[2] < 0.0253303
        assert abs(values[2] - 0.0253303) < 3e-4
        assert vacuum_massless(z, 1e-5).real == pytest.approx(0.0253303, rel=1e-6)


class TestImageSum:
    def test_requires_massless(self):
        with pytest.raises(DomainError):
            image_sum_massless(InverseTemperatureVector(1.0), FourVector(0.5, 0, 0, 0), 0.1, mass=1.0)

    def test_images_pair_across_the_strip(self):
        # F(z, sigma) == F(-z, beta - sigma)
        beta = InverseTemperatureVector(1.0, boosted_time_direction(0.4))
        z = FourVector(0.3, 0.2, -0.1, 0.5)
        assert image_sum_massless(beta, z, 0.7) == pytest.approx(image_sum_massless(beta, -z, 0.3), rel=1e-8)

    def test_cold_limit_is_vacuum(self):
        z = FourVector(0.2, 0.5, 0.0, 0.0)
        cold = image_sum_massless(InverseTemperatureVector(1e4), z, 0.3)
        assert abs(cold - vacuum_massless(z, 0.3)) < 1e-7

    def test_wick_square_limit(self):
        # subtracting the vacuum at small separation leaves 1/(12 beta^2)
        beta = InverseTemperatureVector(2.0)
        z = FourVector(1e-3, 0.0, 0.0, 0.0)
        thermal = image_sum_massless(beta, z, 0.0, terms=2000)
        assert (thermal - vacuum_massless(z)).real == pytest.approx(1.0 / 48.0, rel=1e-5)

    def test_boundary_values(self, origin_q):
        beta = InverseTemperatureVector(1.0)
        z = FourVector(0.2, 0.6, 0.0, 0.0)
        assert boundary_value_massless(KMS(beta), origin_q, z) == pytest.approx(image_sum_massless(beta, z, 0.0))

    @pytest.mark.parametrize("z", [(0, 0, 0, 0), (0.5, 0.5, 0, 0), (-1, 0, 1, 0)])
    def test_boundary_values_refuse_singular_points(self, origin_q, z):
        with pytest.raises(SingularityError):
            boundary_value_massless(Vacuum(), origin_q, FourVector(*z))

    def test_boundary_values_refuse_massive(self, origin_q):
        with pytest.raises(SingularityError):
            boundary_value_massless(Vacuum(mass=1.0), origin_q, FourVector(0.3, 1.0, 0, 0))


class TestGaussianTestFunction:
    def test_transform_at_zero(self):
        h = GaussianTestFunction(center=FourVector.zero(), width=0.7)
        assert h.fourier(np.zeros(4)) == pytest.approx((math.sqrt(2 * math.pi) * 0.7) ** 4)

    def test_transform_of_monomial(self):
        h = GaussianTestFunction(center=FourVector.zero(), width=1.0, coefficients={(1, 0, 0, 0): 1.0})
        expected = (2 * math.pi) ** 2 * (-0.5j) * math.exp(-0.125)
        assert h.fourier(np.array([0.5, 0.0, 0.0, 0.0])) == pytest.approx(expected)

    def test_reflection(self):
        rng = np.random.default_rng(2)
        for h in random_test_functions(3):
            z = rng.normal(size=(5, 4))
            assert h.reflected()(z) == pytest.approx(h(-z))

    def test_rejects_bad_width(self):
        with pytest.raises(DomainError):
            GaussianTestFunction(center=FourVector.zero(), width=0.0)


class TestSmearing:
    def test_commutator_part_is_state_independent(self, origin_q, fast_profile, make_kms, make_mixture):
        states = [Vacuum(mass=0.5), make_kms(1.0, mass=0.5), make_mixture(mass=0.5)]
        for h in random_test_functions(20):
            parts = [
                smeared_boundary(s, origin_q, h, fast_profile) - smeared_boundary(s, origin_q, h.reflected(), fast_profile)
                for s in states
            ]
            assert parts[1] == pytest.approx(parts[0], abs=1e-9)
            assert parts[2] == pytest.approx(parts[0], abs=1e-9)

    def test_strip_approaches_boundary(self, origin_q, fast_profile, make_kms):
        spec = make_kms(1.0, mass=0.5)
        h = GaussianTestFunction(center=FourVector(0.2, 0.1, 0.0, 0.0), width=1.0)
        boundary = smeared_boundary(spec, origin_q, h, fast_profile)
        near = smeared_strip(spec, origin_q, h, 1e-3, config=fast_profile)
        assert near == pytest.approx(boundary, rel=1e-2)

    def test_strip_needs_positive_sigma(self, origin_q, make_kms):
        h = GaussianTestFunction(center=FourVector.zero(), width=1.0)
        with pytest.raises(DomainError):
            smeared_strip(make_kms(), origin_q, h, 0.0)

    def test_even_vacuum_smearing_is_real(self, origin_q, fast_profile):
        h = GaussianTestFunction(
            center=FourVector.zero(), width=1.0, coefficients={(0, 0, 0, 0): 1.0, (2, 0, 0, 0): 0.5}
        )
        value = smeared_boundary(Vacuum(mass=0.5), origin_q, h, fast_profile)
        assert abs(value.imag) < 1e-12

    def test_strip_converges_as_shift_shrinks(self, origin_q, fast_profile, make_kms):
        spec = make_kms(1.0, mass=0.5)
        h = GaussianTestFunction(center=FourVector(0.2, 0.1, 0.0, 0.0), width=1.0)
        boundary = smeared_boundary(spec, origin_q, h, fast_profile)
        gaps = [abs(smeared_strip(spec, origin_q, h, s, config=fast_profile) - boundary) for s in (0.1, 0.05, 0.025)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 0.5 * gaps[0]


class TestTimeRestriction:
    @pytest.mark.parametrize("mass", [0.0, 0.8])
    def test_matches_strip_on_time_axis(self, origin_q, profile, mass):
        beta = InverseTemperatureVector(1.0)
        spec = KMS(beta, mass=mass)
        restricted = time_restriction(spec, origin_q, 0.7, 0.3, beta, profile).value
        direct = strip_value(spec, FourVector(0.7, 0.0, 0.0, 0.0), 0.3, beta, profile)
        assert restricted == pytest.approx(direct, rel=1e-6)

    @pytest.mark.parametrize("mass", [0.0, 0.8])
    def test_kms_pairing(self, origin_q, profile, mass):
        beta = InverseTemperatureVector(1.0)
        spec = KMS(beta, mass=mass)
        upper = time_restriction(spec, origin_q, 0.6, 0.7, beta, profile).value
        lower = time_restriction(spec, origin_q, -0.6, 0.3, beta, profile).value
        assert upper == pytest.approx(lower, rel=1e-6)

    def test_vacuum_decays_as_inverse_square(self, origin_q, profile, rest_beta):
        near = time_restriction(Vacuum(), origin_q, 10.0, 0.01, rest_beta, profile).value
        far = time_restriction(Vacuum(), origin_q, 20.0, 0.01, rest_beta, profile).value
        assert abs(near) / abs(far) == pytest.approx(4.0, rel=2e-2)
        assert near == pytest.approx(vacuum_massless(FourVector(10.0, 0.0, 0.0, 0.0), 0.01), rel=1e-5)

    def test_midstrip_evenness(self, origin_q, profile, rest_beta):
        assert midstrip_defect(KMS(rest_beta), origin_q, rest_beta, config=profile) < 1e-9
        assert midstrip_defect(Vacuum(), origin_q, rest_beta, config=profile) > 1e-3

    def test_sampled_spectrum_matches_convolution(self, origin_q, profile, rest_beta):
        spec = KMS(rest_beta)
        k = np.linspace(-10.0, 10.0, 9)
        sampled = sampled_time_spectrum(spec, origin_q, 0.25, k, rest_beta, profile)
        reference = convolved_spectrum(spec, origin_q, 0.25, k, rest_beta, sampled.window, profile)
        assert np.max(np.abs(sampled.values - reference)) < 1e-6 * np.max(np.abs(reference))


class TestClustering:
    def test_massless_kms_clusters(self, origin_q, profile, rest_beta):
        assert clustering_ratio(KMS(rest_beta), origin_q, rest_beta, profile) < 1e-4

    def test_additive_constant_is_rejected(self, origin_q, profile, rest_beta):
        spec = KMS(rest_beta)

        def shifted(t):
            return time_restriction(spec, origin_q, t, 0.01, rest_beta, profile).value + 1e-3

        assert clustering_metric(shifted, 1.0) > 1e-4

    def test_vacuum_decays_slowly(self, origin_q, profile, rest_beta):
        assert clustering_ratio(Vacuum(), origin_q, rest_beta, profile) > 1e-4

    def test_massless_kms_decreases_along_time_axis(self, origin_q, profile, rest_beta):
        spec = KMS(rest_beta)
        near = abs(time_restriction(spec, origin_q, 1.0, 0.01, rest_beta, profile).value)
        ratios = [
            abs(time_restriction(spec, origin_q, t, 0.01, rest_beta, profile).value) / near
            for t in (5.0, 10.0, 20.0)
        ]
        assert ratios[0] < 1e-4
        assert ratios[1] <= ratios[0] + 1e-7
        assert ratios[2] <= ratios[1] + 1e-7

    def test_massive_offset_is_rejected(self, origin_q, profile, rest_beta):
        spec = KMS(rest_beta, mass=1.0)

        @lru_cache(maxsize=None)
        def correlator(t):
            return time_restriction(spec, origin_q, t, 0.01, rest_beta, profile).value

        offset = 0.05 * abs(correlator(1.0))
        clean = clustering_metric(correlator, 1.0, smoothing=MASSIVE_CLUSTERING_SMOOTHING)
        shifted = clustering_metric(lambda t: correlator(t) + offset, 1.0, smoothing=MASSIVE_CLUSTERING_SMOOTHING)
        assert clean < MASSIVE_CLUSTERING_BOUND < shifted

    def test_smoothing_keeps_a_constant(self):
        assert clustering_metric(lambda t: 2.0, 1.0, smoothing=4.0) == pytest.approx(1.0)
        assert clustering_metric(lambda t: math.cos(3.0 * t), 1.0, smoothing=4.0) < 1e-4
