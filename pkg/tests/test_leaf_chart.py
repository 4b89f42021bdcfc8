"""
叶图测试
"""
import numpy as np
import pytest

from src.config import ChartConfig
from src.error_handler import BeltramiBoundError, QuadratureError, ValidationError
from src.homotopy_solver import BeltramiField, integrate_homotopy
from src.leaf_chart import LeafChart, LeafPatch, develop, dilatation_estimate, loop_residual
from src.spectral_core import TORUS2, TORUS3, FourierField
from tests.conftest import smooth_beltrami


def small_patch(resolution=5, radius=1.5, base=(0.3, -0.2, 1.1)):
    return LeafPatch(base, radius, resolution)


class TestClosedForms:
    def test_identity_chart(self, sqrt_params):
        f = FourierField.constant(1.0, TORUS3, 1)
        mu = FourierField.zeros(TORUS3, 1)
        patch = small_patch()
        sample = develop(sqrt_params, f, mu, patch)
        np.testing.assert_allclose(sample.psi, sample.z, atol=1e-12)
        assert sample.loop_residual < 1e-12
        assert sample.max_dilatation == pytest.approx(1.0)
        assert sample.min_jacobian == pytest.approx(1.0, rel=1e-6)
        assert not sample.warnings

    def test_constant_beltrami_chart(self, sqrt_params):
        c = 0.5
        f = FourierField.constant(1.0 / (1.0 - c), TORUS3, 1)
        mu = FourierField.constant(c, TORUS3, 1)
        sample = develop(sqrt_params, f, mu, small_patch())
        z = sample.z
        np.testing.assert_allclose(sample.psi, (z + c * np.conj(z)) / (1 - c), atol=1e-11)
        np.testing.assert_allclose(sample.dilatation, 3.0)
        assert sample.derivative_defect < 1e-6
        assert sample.metric_defect < 1e-5

    def test_non_closed_form_is_refused(self, sqrt_params):
        f = FourierField.constant(1.0, TORUS3, 1) + FourierField.single_mode((0, 1, 0), 0.2)
        mu = FourierField.zeros(TORUS3, 1)
        with pytest.raises(QuadratureError):
            develop(sqrt_params, f, mu, small_patch())
        assert loop_residual(sqrt_params, f, mu, small_patch(radius=3.0), n_loops=8) > 1e-3


class TestPipeline:
    def test_chart_of_homotopy_solution(self, sqrt_params, rng):
        mu = smooth_beltrami(rng, 2, 0.3)
        beltrami = BeltramiField.from_field(mu)
        solution = integrate_homotopy(sqrt_params, beltrami)
        chart = LeafChart(sqrt_params, solution.final, mu, ChartConfig(resolution=9), max_workers=2)
        patch = LeafPatch((0.0, 0.0, 0.0), 3.0, 9)
        sample = chart.develop(patch, n_loops=6, rng=np.random.default_rng(3))
        bound = (1 + beltrami.delta_hat) / (1 - beltrami.delta_hat)
        assert sample.psi[4, 4] == pytest.approx(0.0, abs=1e-14)
        assert sample.loop_residual <= 1e-6
        assert sample.min_jacobian > 0
        assert sample.max_dilatation <= bound + 0.05
        assert sample.derivative_defect <= 1e-5
        assert chart.translation_defect(patch, (0.5, 0.25)) <= 1e-8

    def test_threaded_columns_match_serial(self, sqrt_params, rng):
        mu = smooth_beltrami(rng, 1, 0.2)
        f = integrate_homotopy(sqrt_params, BeltramiField.from_field(mu)).final
        axis = np.linspace(-2.0, 2.0, 40)
        serial = LeafChart(sqrt_params, f, mu).psi_on((0.1, 0.2, 0.3), axis, axis)
        threaded = LeafChart(sqrt_params, f, mu, max_workers=3).psi_on((0.1, 0.2, 0.3), axis, axis)
        np.testing.assert_allclose(serial, threaded, atol=1e-14)


class TestValidation:
    @pytest.mark.parametrize("base, radius, resolution", [
        ((0.0, 0.0), 1.0, 5), ((0.0, 0.0, 0.0), 0.0, 5), ((0.0, 0.0, 0.0), 1.0, 1),
    ])
    def test_patch_arguments(self, base, radius, resolution):
        with pytest.raises(ValidationError):
            LeafPatch(base, radius, resolution)

    def test_torus2_has_no_leaves(self, torus2_params):
        f = FourierField.constant(1.0, TORUS2, 1)
        chart = LeafChart(torus2_params, f, FourierField.zeros(TORUS2, 1))
        with pytest.raises(ValidationError):
            chart.psi_on((0.0, 0.0, 0.0), np.zeros(1), np.zeros(1))

    def test_dilatation_requires_beltrami_bound(self, sqrt_params):
        mu = FourierField.constant(1.5, TORUS3, 1)
        with pytest.raises(BeltramiBoundError):
            dilatation_estimate(sqrt_params, mu, small_patch())
