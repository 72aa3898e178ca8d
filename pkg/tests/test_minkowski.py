import math

import numpy as np
import pytest

from errors import ConfigError, DomainError, RankDeficiencyError
from minkowski import (
    CausalClass,
    FourVector,
    InverseTemperatureVector,
    SymmetricTensor,
    TimeDirection,
    boost_to_rest_frame,
    boosted_time_direction,
    classify,
    in_forward_cone,
    minkowski_product,
    multi_indices,
    multiplicity,
    polarization_reconstruct,
    relative_rapidity,
    tensor_from_timelike_diagonal,
)


# -- Helpers --

def random_symmetric(rng, rank):
    return SymmetricTensor.from_array(rng.normal(size=(4,) * rank)) if rank else SymmetricTensor.scalar(rng.normal())


def diagonal_of(tensor):
    return lambda v: tensor.evaluate(*([v] * tensor.rank))


class TestFourVector:
    def test_from_string(self):
        v = FourVector.from_string("1, 0.5,0,-2")
        assert v.to_list() == [1.0, 0.5, 0.0, -2.0]

    @pytest.mark.parametrize("text", ["1,2,3", "a,b,c,d", ""])
    def test_from_string_rejects_malformed(self, text):
        with pytest.raises(ConfigError):
            FourVector.from_string(text)

    def test_non_finite_component(self):
        with pytest.raises(DomainError):
            FourVector(math.nan, 0.0, 0.0, 0.0)

    def test_arithmetic(self):
        a = FourVector(1.0, 2.0, 3.0, 4.0)
        b = FourVector(0.5, 0.5, 0.5, 0.5)
        assert (a + b).to_list() == [1.5, 2.5, 3.5, 4.5]
        assert (a - b).to_list() == [0.5, 1.5, 2.5, 3.5]
        assert (-a).to_list() == [-1.0, -2.0, -3.0, -4.0]
        assert (a * 2.0).to_list() == [2.0, 4.0, 6.0, 8.0]


class TestMinkowskiProduct:
    def test_signature(self):
        assert minkowski_product(FourVector(1, 0, 0, 0), FourVector(1, 0, 0, 0)) == 1.0
        assert minkowski_product(FourVector(0, 1, 0, 0), FourVector(0, 1, 0, 0)) == -1.0

    def test_accepts_complex_arrays(self):
        zeta = np.array([1.0 - 0.5j, 0.0, 0.0, 0.0])
        assert minkowski_product(zeta, zeta) == pytest.approx((1.0 - 0.5j) ** 2)

    @pytest.mark.parametrize(
        "vector, expected",
        [
            ((1, 0, 0, 0), CausalClass.TIMELIKE_FUTURE),
            ((-1, 0.2, 0, 0), CausalClass.TIMELIKE_PAST),
            ((0.2, 1, 0, 0), CausalClass.SPACELIKE),
            ((1, 1, 0, 0), CausalClass.NULL_FUTURE),
            ((-1, 0, 1, 0), CausalClass.NULL_PAST),
            ((0, 0, 0, 0), CausalClass.ZERO),
        ],
    )
    def test_classify(self, vector, expected):
        assert classify(FourVector(*vector)) is expected

    def test_forward_cone(self):
        assert in_forward_cone(FourVector(2, 1, 0, 0))
        assert not in_forward_cone(FourVector(1, 1, 0, 0))


class TestTimeDirection:
    def test_normalizes(self):
        e = TimeDirection(FourVector(2.0, 0.0, 0.0, 0.0))
        assert e.as_array() == pytest.approx([1.0, 0.0, 0.0, 0.0])

    @pytest.mark.parametrize("vector", [(0.5, 1, 0, 0), (-1, 0, 0, 0), (1, 1, 0, 0)])
    def test_rejects_non_future_timelike(self, vector):
        with pytest.raises(DomainError):
            TimeDirection(FourVector(*vector))

    def test_inverse_temperature_from_vector(self):
        beta = InverseTemperatureVector.from_vector([2.0, 0.0, 0.0, 0.0])
        assert beta.beta == pytest.approx(2.0)
        assert beta.to_list() == pytest.approx([2.0, 0.0, 0.0, 0.0])

    def test_inverse_temperature_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            InverseTemperatureVector(0.0)


class TestBoosts:
    def test_boost_maps_direction_to_rest(self):
        e = boosted_time_direction(0.8, axis=2)
        assert boost_to_rest_frame(e) @ e.as_array() == pytest.approx([1.0, 0.0, 0.0, 0.0], abs=1e-12)

    def test_boost_preserves_metric(self):
        rng = np.random.default_rng(7)
        e = TimeDirection(FourVector(2.0, 0.3, -0.4, 0.5))
        L = boost_to_rest_frame(e)
        for _ in range(5):
            u, v = rng.normal(size=4), rng.normal(size=4)
            assert minkowski_product(L @ u, L @ v) == pytest.approx(minkowski_product(u, v))

    def test_relative_rapidity(self):
        rest = TimeDirection.rest()
        assert relative_rapidity(rest, boosted_time_direction(0.7)) == pytest.approx(0.7)
        assert relative_rapidity(rest, rest) == 0.0

    def test_bad_axis(self):
        with pytest.raises(DomainError):
            boosted_time_direction(0.1, axis=0)


class TestSymmetricTensor:
    def test_multiplicity(self):
        assert multiplicity((0, 0, 1)) == 3
        assert multiplicity((0, 1, 2, 3)) == 24
        assert len(multi_indices(2)) == 10

    def test_from_array_symmetrizes(self):
        arr = np.zeros((4, 4))
        arr[0, 1] = 2.0
        tensor = SymmetricTensor.from_array(arr)
        assert tensor[(1, 0)] == pytest.approx(1.0)
        assert tensor.to_array() == pytest.approx(tensor.to_array().T)

    def test_evaluate_matches_contraction(self):
        rng = np.random.default_rng(3)
        tensor = random_symmetric(rng, 3)
        v = rng.normal(size=4)
        expected = np.einsum("ijk,i,j,k->", tensor.to_array(), v, v, v)
        assert tensor.evaluate(v, v, v) == pytest.approx(expected)

    def test_rank_mismatch(self):
        with pytest.raises(DomainError):
            SymmetricTensor.zeros(1) + SymmetricTensor.zeros(2)

    @pytest.mark.parametrize("key", [(1, 0), (0, 4), (0,), (0, 0, 0)])
    def test_rejects_invalid_keys(self, key):
        with pytest.raises(DomainError):
            SymmetricTensor(2, {key: 1.0})

    def test_sorted_keys_accepted(self):
        tensor = SymmetricTensor(2, {(0, 1): 2.0})
        assert tensor[(1, 0)] == 2.0
        assert tensor[(0, 0)] == 0.0


class TestPolarization:
    @pytest.mark.parametrize("rank", [1, 2, 3, 4])
    def test_round_trip(self, rank):
        rng = np.random.default_rng(100 + rank)
        for _ in range(25):
            tensor = random_symmetric(rng, rank)
            rebuilt = polarization_reconstruct(diagonal_of(tensor), rank)
            worst = max(abs(rebuilt.coefficients[i] - tensor.coefficients[i]) for i in multi_indices(rank))
            assert worst < 1e-10

    def test_non_standard_basis(self):
        rng = np.random.default_rng(11)
        tensor = random_symmetric(rng, 2)
        basis = [FourVector(*row) for row in (np.eye(4) + 0.3 * rng.normal(size=(4, 4)))]
        rebuilt = polarization_reconstruct(diagonal_of(tensor), 2, basis=basis)
        assert rebuilt.to_array() == pytest.approx(tensor.to_array(), abs=1e-9)

    def test_rank_zero(self):
        rebuilt = polarization_reconstruct(lambda v: 3.5, 0)
        assert rebuilt.value == 3.5

    def test_rank_limit(self):
        with pytest.raises(DomainError):
            polarization_reconstruct(lambda v: 0.0, 7)


class TestTimelikeDiagonal:
    def test_recovers_tensor_from_timelike_samples(self):
        rng = np.random.default_rng(5)
        tensor = random_symmetric(rng, 2)
        samples = []
        for _ in range(30):
            spatial = 0.6 * rng.uniform(-1, 1, size=3) / math.sqrt(3)
            e = TimeDirection(FourVector(1.0, *spatial))
            samples.append((e, tensor.evaluate(e.e, e.e)))
        fit = tensor_from_timelike_diagonal(samples, 2)
        assert fit.rank == 10
        assert fit.tensor.to_array() == pytest.approx(tensor.to_array(), abs=1e-8)

    @pytest.mark.parametrize("rank", [2, 3])
    def test_agrees_with_polarization(self, rank):
        rng = np.random.default_rng(40 + rank)
        tensor = random_symmetric(rng, rank)
        samples = []
        for _ in range(80):
            spatial = 0.5 * rng.uniform(-1, 1, size=3) / math.sqrt(3)
            e = TimeDirection(FourVector(1.0, *spatial))
            samples.append((e, tensor.evaluate(*([e.e] * rank))))
        fit = tensor_from_timelike_diagonal(samples, rank)
        polarized = polarization_reconstruct(diagonal_of(tensor), rank)
        worst = max(abs(fit.tensor.coefficients[i] - polarized.coefficients[i]) for i in multi_indices(rank))
        assert worst < 1e-7

    def test_rank_deficient(self):
        rest = TimeDirection.rest()
        with pytest.raises(RankDeficiencyError) as info:
            tensor_from_timelike_diagonal([(rest, 1.0)] * 5, 2)
        assert info.value.required == 10
