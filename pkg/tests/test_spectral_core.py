"""
谱核心测试
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from src.error_handler import FieldMismatchError, ValidationError
from src.spectral_core import (
    TORUS2, TORUS3, FourierField, ModeIndex, NormSpec, average, canonical_order_key, canonical_sign,
    field_from_dict, field_to_dict, grid_to_field, inner, multiply, multiply_with_spill, norm,
    partial_derivative, projective_distance, reciprocal, sup_estimate,
)


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def random_field(seed, cutoff=3, dimension=TORUS3, decay=0.5):
    return FourierField.random(np.random.default_rng(seed), dimension, cutoff, decay=decay)


class TestModeIndex:
    def test_norm_is_l1(self):
        assert ModeIndex.of(2, -3, 1).norm == 6

    def test_canonical_sign(self):
        assert canonical_sign((0, -1, 2)) == (0, 1, -2)
        assert ModeIndex.of(-1, 0, 2).canonical() == ModeIndex.of(1, 0, -2)

    def test_order_prefers_small_norm_then_canonical_sign(self):
        modes = [(1, 0, -2), (-1, 0, 2), (0, 0, 1)]
        assert min(modes, key=canonical_order_key) == (0, 0, 1)
        assert sorted(modes[:2], key=canonical_order_key)[0] == (1, 0, -2)

    def test_rejects_wrong_arity(self):
        with pytest.raises(ValidationError):
            ModeIndex.of(1, 2, 3, 4)


class TestMultiply:
    def test_constant_one_is_identity(self):
        b = random_field(1)
        one = FourierField.constant(1.0, TORUS3, b.cutoff)
        np.testing.assert_allclose(multiply(one, b).coefficients, b.coefficients, atol=1e-14)

    def test_exponential_law(self):
        a = FourierField.single_mode((1, 0, 0), cutoff=2)
        b = FourierField.single_mode((0, 1, 0), cutoff=2)
        product = multiply(a, b)
        assert product.coefficient((1, 1, 0)) == pytest.approx(1.0, abs=1e-14)
        assert norm(product) == pytest.approx(1.0, abs=1e-14)

    def test_matches_physical_grid_oracle(self, rng):
        a = FourierField.random(rng, TORUS3, 4)
        b = FourierField.random(rng, TORUS3, 4)
        oracle = grid_to_field(a.grid_values(17) * b.grid_values(17), TORUS3, 4)
        product = multiply(a, b)
        assert norm(product - oracle) <= 1e-12 * norm(oracle)

    def test_spill_reports_truncated_mass(self):
        a = FourierField.single_mode((1, 0, 0), 0.5, cutoff=1)
        product, spill = multiply_with_spill(a, a)
        assert norm(product) == pytest.approx(0.0, abs=1e-15)
        assert spill == pytest.approx(0.25, rel=1e-12)

    def test_mismatched_cutoffs_raise(self):
        with pytest.raises(FieldMismatchError):
            multiply(random_field(1, cutoff=2), random_field(2, cutoff=3))

    def test_reciprocal_of_smooth_field(self):
        f = FourierField.constant(1.0, TORUS3, 4) + FourierField.single_mode((0, 1, 0), 0.2, cutoff=4)
        product = multiply(f, reciprocal(f))
        assert norm(product - 1.0) < 1e-3

    @given(seeds)
    def test_associative_within_band(self, seed):
        # 阶数1的因子补零到3，三重乘积不会被截断
        a, b, c = (random_field(seed + i, cutoff=1).with_cutoff(3) for i in range(3))
        left = multiply(multiply(a, b), c)
        right = multiply(a, multiply(b, c))
        assert norm(left - right) <= 1e-12 * max(1.0, norm(left))

    @given(seeds)
    def test_average_of_squared_modulus(self, seed):
        a = random_field(seed)
        mean_square = average(multiply(a, a.conj()))
        assert abs(mean_square.imag) <= 1e-12 * norm(a) ** 2
        assert mean_square.real >= 0.0
        assert mean_square.real == pytest.approx(norm(a) ** 2, rel=1e-12)


class TestDerivativeAndAverage:
    def test_constant_derivative_vanishes(self):
        c = FourierField.constant(2.5, TORUS3, 2)
        assert norm(partial_derivative(c, 1)) == 0.0

    def test_single_mode_axis3(self):
        e = FourierField.single_mode((2, 0, -1), cutoff=2)
        d = partial_derivative(e, 3)
        assert d.coefficient((2, 0, -1)) == pytest.approx(-1j)

    def test_matches_central_differences(self, rng):
        a = FourierField.random(rng, TORUS3, 4)
        x = np.linspace(0, 2 * np.pi, 129)
        points = np.stack([x, np.full_like(x, 0.3), np.full_like(x, 1.1)], axis=1)
        step = 1e-5
        shift = np.array([step, 0.0, 0.0])
        difference = (a.evaluate(points + shift) - a.evaluate(points - shift)) / (2 * step)
        exact = partial_derivative(a, 1).evaluate(points)
        assert np.max(np.abs(difference - exact)) <= 1e-6 * max(1.0, np.max(np.abs(exact)))

    def test_invalid_axis(self):
        with pytest.raises(ValidationError):
            partial_derivative(FourierField.zeros(TORUS2, 1), 3)

    def test_average_examples(self, rng):
        assert average(FourierField.constant(3 - 1j, TORUS3, 2)) == pytest.approx(3 - 1j)
        assert average(FourierField.single_mode((1, 0, 0))) == 0
        a = FourierField.random(rng, TORUS3, 4)
        assert np.mean(a.grid_values(9)) == pytest.approx(average(a), abs=1e-12)

    @given(seeds)
    def test_mixed_derivatives_commute(self, seed):
        a = random_field(seed)
        for i, j in ((1, 2), (1, 3), (2, 3)):
            left = partial_derivative(partial_derivative(a, i), j)
            right = partial_derivative(partial_derivative(a, j), i)
            assert norm(left - right) <= 1e-12 * max(1.0, norm(left))


class TestNorms:
    def test_single_mode_normalization(self):
        e = FourierField.single_mode((1, 0, 0))
        assert norm(e) == pytest.approx(1.0)
        assert norm(e, NormSpec.analytic(0.5)) == pytest.approx(math.exp(0.25), rel=1e-12)
        assert norm(e, NormSpec.sobolev(1)) == pytest.approx(math.sqrt(2.0))

    def test_zero_field(self):
        zero = FourierField.zeros(TORUS3, 2)
        for spec in (NormSpec.sobolev(0), NormSpec.sobolev(2), NormSpec.analytic(1.0)):
            assert norm(zero, spec) == 0.0

    def test_invalid_specs(self):
        with pytest.raises(ValidationError):
            NormSpec.sobolev(-1)
        with pytest.raises(ValidationError):
            NormSpec.analytic(0.0)

    @given(seeds)
    def test_parseval(self, seed):
        rng = np.random.default_rng(seed)
        a = FourierField.random(rng, TORUS3, 2)
        b = FourierField.random(rng, TORUS3, 2)
        left = norm(a + b) ** 2
        right = norm(a) ** 2 + norm(b) ** 2 + 2 * inner(a, b).real
        assert left == pytest.approx(right, rel=1e-12)
        assert np.mean(np.abs(a.grid_values(5)) ** 2) == pytest.approx(norm(a) ** 2, rel=1e-12)


class TestSupEstimate:
    def test_constant(self):
        assert sup_estimate(FourierField.constant(0.5, TORUS3, 2), 4) == pytest.approx(0.5)

    def test_single_mode_has_constant_modulus(self):
        e = FourierField.single_mode((1, 0, 0), 0.3)
        assert sup_estimate(e, 4) == pytest.approx(0.3, abs=1e-10)

    def test_maximum_on_grid(self):
        f = FourierField.constant(0.25, TORUS3, 1) + FourierField.single_mode((0, 0, 1), 0.25)
        assert sup_estimate(f, 4) == pytest.approx(0.5, abs=1e-6)

    def test_oversample_guard(self):
        with pytest.raises(ValidationError):
            sup_estimate(FourierField.zeros(TORUS3, 1), 1)


class TestFieldAlgebra:
    def test_real_field_is_self_conjugate(self, rng):
        a = FourierField.random(rng, TORUS3, 2, real=True)
        assert a.is_real()
        assert np.max(np.abs(a.grid_values(5).imag)) < 1e-12

    def test_projective_distance_ignores_scalars(self, rng):
        a = FourierField.random(rng, TORUS3, 2)
        assert projective_distance(a, a * (2 - 3j)) == pytest.approx(0.0, abs=1e-14)
        assert projective_distance(a, FourierField.zeros(TORUS3, 2)) == 1.0

    def test_with_cutoff_pads_and_truncates(self, rng):
        a = FourierField.random(rng, TORUS3, 2)
        padded = a.with_cutoff(4)
        assert padded.cutoff == 4
        assert norm(padded) == pytest.approx(norm(a))
        np.testing.assert_array_equal(padded.with_cutoff(2).coefficients, a.coefficients)

    def test_products_require_multiply(self, rng):
        a = FourierField.random(rng, TORUS3, 1)
        with pytest.raises(TypeError):
            a * a

    def test_grid_too_small(self):
        with pytest.raises(ValidationError):
            FourierField.zeros(TORUS3, 3).grid_values(5)


class TestLatticeFields:
    def test_pullback_evaluates_physical_modes(self):
        lattice = [[-49, 0, 64], [1, 2, 3]]
        field = FourierField.from_modes(TORUS3, 2, {(0, 0): 1.0, (1, 0): 0.5, (1, -1): 0.25j}, lattice)
        assert field.physical_coefficient((-49, 0, 64)) == pytest.approx(0.5)
        assert field.physical_coefficient((-50, -2, 61)) == pytest.approx(0.25j)
        assert field.physical_coefficient((1, 0, 0)) == 0

        x = np.array([[0.3, -1.2, 2.0]])
        expected = 1.0 + 0.5 * np.exp(1j * (-49 * 0.3 + 64 * 2.0)) \
            + 0.25j * np.exp(1j * (-50 * 0.3 - 2 * -1.2 + 61 * 2.0))
        assert field.evaluate(x)[0] == pytest.approx(expected, abs=1e-12)

    def test_derivative_uses_physical_index(self):
        field = FourierField.from_modes(TORUS3, 1, {(1,): 1.0}, [[3, 0, -5]])
        assert partial_derivative(field, 3).coefficient((1,)) == pytest.approx(-5j)

    def test_serialized_lattice(self):
        field = FourierField.from_modes(TORUS3, 1, {(1,): 2.0}, [[3, 0, -5]])
        data = field_to_dict(field)
        assert data["lattice"] == [[3, 0, -5]]
        assert data["modes"] == [[1, 2.0, 0.0]]
        assert field_from_dict(data).physical_coefficient((3, 0, -5)) == pytest.approx(2.0)

    def test_non_injective_lattice(self):
        field = FourierField.zeros(TORUS3, 1, [[1, 0, 0], [1, 0, 0]])
        with pytest.raises(FieldMismatchError):
            field.physical_modes
