"""
性质检查组测试
"""
import numpy as np
import pytest

from src.foliation_ops import FoliationParams, apply_u
from src.spectral_core import TORUS3, FourierField, norm, sup_estimate
from src.verification_engine import VerificationEngine, corrupt_u_transform, random_beltrami


TORUS3_CHECKS = [
    "unitarity", "intertwining_identity", "parseval", "resolvent_dense_oracle", "resolvent_bound_h0",
    "resolvent_bound_h1", "constant_beltrami_closed_form", "kernel_oracle_agreement", "closedness_residual",
    "forced_coefficient_magnitude", "counterexample_duality",
]


@pytest.fixture(scope="module")
def clean_summary():
    engine = VerificationEngine(FoliationParams.from_strings("sqrt2", "sqrt3"), cutoff=3, samples=4)
    return engine.run()


class TestVerification:
    def test_all_checks_pass(self, clean_summary):
        assert [c.name for c in clean_summary.checks] == TORUS3_CHECKS
        assert clean_summary.all_passed, clean_summary.failures
        assert clean_summary.pass_rate == 1.0

    def test_corrupted_u_is_detected(self):
        engine = VerificationEngine(FoliationParams.from_strings("sqrt2", "sqrt3"), cutoff=3, samples=4)
        summary = engine.run(corrupt_u=True)
        assert "intertwining_identity" in summary.failures
        assert "unitarity" in summary.failures
        assert "parseval" not in summary.failures

    def test_fault_does_not_leak(self, sqrt_params):
        VerificationEngine(sqrt_params, cutoff=2, samples=2).run(corrupt_u=True)
        e = FourierField.single_mode((0, 1, 0))
        assert apply_u(sqrt_params, e).coefficient((0, 1, 0)) == pytest.approx(-1.0)

    def test_torus2_subset(self, torus2_params):
        summary = VerificationEngine(torus2_params, cutoff=3, samples=4).run()
        names = [c.name for c in summary.checks]
        assert "counterexample_duality" not in names
        assert summary.all_passed, summary.failures

    def test_same_seed_same_values(self):
        params = FoliationParams.from_strings("golden", "sqrt2")
        first = VerificationEngine(params, cutoff=2, seed=11, samples=2).check_parseval(np.random.default_rng(11))
        second = VerificationEngine(params, cutoff=2, seed=11, samples=2).check_parseval(np.random.default_rng(11))
        assert first.value == second.value


class TestHelpers:
    def test_random_beltrami_hits_target(self, rng):
        mu = random_beltrami(rng, TORUS3, 2, 0.4)
        assert mu.is_real()
        assert sup_estimate(mu, 4) == pytest.approx(0.4)

    def test_corruption_spares_constant_mode(self):
        field = FourierField.constant(1.0, TORUS3, 1) + FourierField.single_mode((1, 0, 0))
        values = np.ones(field.coefficients.shape, dtype=complex)
        corrupted = corrupt_u_transform(values, field)
        assert corrupted[1, 1, 1] == 1.0
        assert corrupted[2, 1, 1] == pytest.approx(np.exp(0.1j))
        assert norm(field) > 0
