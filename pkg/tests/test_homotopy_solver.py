"""
同伦求解器测试
"""
import math
from dataclasses import replace

import numpy as np
import pytest

from src.config import SolverConfig
from src.error_handler import (
    BeltramiBoundError, ConvergenceError, DomainError, FieldMismatchError, ValidationError, VanishingError,
)
from src.foliation_ops import FoliationParams
from src.homotopy_solver import (
    BeltramiField, HomotopyPath, closedness_residual, integrate_homotopy, kernel_oracle, prop1_probe,
    refinement_study, resolvent_budget, resolvent_iterate, resolvent_matrix, rk4_step, torus2_solve,
)
from src.spectral_core import TORUS2, TORUS3, FourierField, norm, projective_distance
from tests.conftest import smooth_beltrami


class TestResolvent:
    def test_zero_nu_is_identity(self, sqrt_params, rng):
        g = FourierField.random(rng, TORUS3, 2)
        result = resolvent_iterate(sqrt_params, FourierField.zeros(TORUS3, 2), g)
        assert result.iterations == 0
        assert norm(result.solution - g) == 0.0

    def test_constant_nu_on_eigenmodes(self, sqrt_params):
        nu = FourierField.constant(0.5, TORUS3, 1)
        one = FourierField.constant(1.0, TORUS3, 1)
        assert norm(resolvent_iterate(sqrt_params, nu, one).solution - 2.0) < 1e-12
        e = FourierField.single_mode((0, 1, 0))
        y = resolvent_iterate(sqrt_params, nu, e).solution
        assert y.coefficient((0, 1, 0)) == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_matches_dense_solve(self, sqrt_params, rng):
        nu = smooth_beltrami(rng, 2, 0.4)
        g = FourierField.random(rng, TORUS3, 2)
        iterate = resolvent_iterate(sqrt_params, nu, g)
        dense = np.linalg.solve(resolvent_matrix(sqrt_params, nu), g.coefficients.reshape(-1))
        assert norm(iterate.solution - g.like(dense.reshape(g.coefficients.shape))) <= 1e-9 * norm(g)
        assert iterate.iterations <= resolvent_budget(0.4, 1e-13, 20)
        # 相邻两步的变化量按 sup|ν| 收缩
        changes = [c for c in iterate.history if c > 1e-11]
        assert len(changes) >= 3
        assert all(later <= 0.41 * earlier for earlier, later in zip(changes, changes[1:]))

    def test_refuses_large_nu(self, sqrt_params):
        nu = FourierField.constant(1.2, TORUS3, 1)
        with pytest.raises(BeltramiBoundError):
            resolvent_iterate(sqrt_params, nu, FourierField.constant(1.0, TORUS3, 1))

    def test_budget_exhaustion(self, sqrt_params):
        nu = FourierField.constant(0.9, TORUS3, 1)
        with pytest.raises(ConvergenceError):
            resolvent_iterate(sqrt_params, nu, FourierField.constant(1.0, TORUS3, 1), margin=-200)

    @pytest.mark.parametrize("order", [0, 1])
    def test_norm_bound_probe(self, sqrt_params, rng, order):
        nu = smooth_beltrami(rng, 2, 0.5)
        report = prop1_probe(sqrt_params, nu, order, trials=6, rng=rng)
        assert report.passed
        assert report.trials == 6
        with pytest.raises(ValidationError):
            prop1_probe(sqrt_params, nu, 2, trials=1)


class TestClosedForms:
    def test_zero_beltrami(self, sqrt_params):
        mu = FourierField.zeros(TORUS3, 2)
        solution = integrate_homotopy(sqrt_params, BeltramiField.from_field(mu))
        assert norm(solution.final - 1.0) == 0.0
        assert solution.times[-1] == 1.0

    @pytest.mark.parametrize("c", [0.5, 0.3 + 0.4j, -0.6])
    def test_constant_beltrami(self, sqrt_params, c):
        mu = FourierField.constant(c, TORUS3, 2)
        solution = integrate_homotopy(sqrt_params, BeltramiField.from_field(mu))
        assert norm(solution.final - 1.0 / (1.0 - c)) < 1e-8

    def test_sine_path_has_same_endpoint(self, sqrt_params):
        mu = FourierField.constant(0.5, TORUS3, 1)
        config = SolverConfig(path="sine")
        solution = integrate_homotopy(sqrt_params, BeltramiField.from_field(mu), config)
        assert solution.path == "sine"
        assert norm(solution.final - 2.0) < 1e-8

    def test_analytic_step_control(self, sqrt_params):
        mu = FourierField.constant(0.5, TORUS3, 1)
        config = SolverConfig(category="analytic", analytic_radius=0.2)
        solution = integrate_homotopy(sqrt_params, BeltramiField.from_field(mu), config)
        assert solution.category == "analytic"
        assert norm(solution.final - 2.0) < 1e-8

    def test_torus2_constant(self):
        mu = FourierField.constant(0.2, TORUS2, 2)
        solution = torus2_solve(BeltramiField.from_field(mu))
        assert norm(solution.final - 1.25) < 1e-8
        with pytest.raises(FieldMismatchError):
            torus2_solve(BeltramiField.from_field(FourierField.zeros(TORUS3, 1)))


class TestKernelOracle:
    def test_torus2_single_mode(self):
        mu = FourierField.single_mode((1, 0), 0.4, cutoff=4)
        beltrami = BeltramiField.from_field(mu)
        solution = torus2_solve(beltrami)
        oracle = kernel_oracle(FoliationParams.torus2(), beltrami)
        assert not oracle.ambiguous
        assert oracle.normalization == "average"
        assert projective_distance(solution.final, oracle.field) <= 1e-6

    def test_torus3_cosine(self, sqrt_params):
        mu = (FourierField.single_mode((0, 1, 0), 0.15, cutoff=4)
              + FourierField.single_mode((0, -1, 0), 0.15, cutoff=4))
        beltrami = BeltramiField.from_field(mu)
        solution = integrate_homotopy(sqrt_params, beltrami)
        oracle = kernel_oracle(sqrt_params, beltrami)
        assert oracle.field.coefficient((0, 0, 0)) == pytest.approx(1.0)
        assert projective_distance(solution.final, oracle.field) <= 1e-6

    def test_degenerate_slope(self):
        params = FoliationParams.from_strings("0", "0")
        with pytest.raises(DomainError):
            kernel_oracle(params, BeltramiField.from_field(FourierField.zeros(TORUS3, 1)))


class TestIntegration:
    def test_single_mode_closedness(self, sqrt_params):
        mu = FourierField.single_mode((0, 1, 0), 0.15, cutoff=3)
        solution = integrate_homotopy(sqrt_params, BeltramiField.from_field(mu))
        assert closedness_residual(sqrt_params, mu, solution.final) <= 1e-6
        assert all(d.residual <= 1e-6 for d in solution.diagnostics)
        assert all(d.min_abs_f > 0 for d in solution.diagnostics)
        assert not solution.unit_choice_exercised

    def test_random_beltrami(self, sqrt_params, rng):
        mu = smooth_beltrami(rng, 2, 0.3)
        solution = integrate_homotopy(sqrt_params, BeltramiField.from_field(mu))
        assert solution.diagnostics[-1].residual <= 1e-6
        assert solution.times == sorted(solution.times)

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(10))
    def test_agrees_with_kernel_oracle(self, sqrt_params, seed):
        mu = smooth_beltrami(np.random.default_rng(seed), 6, 0.45)
        beltrami = BeltramiField.from_field(mu)
        assert beltrami.delta_hat <= 0.5
        solution = integrate_homotopy(sqrt_params, beltrami)
        oracle = kernel_oracle(sqrt_params, beltrami)
        assert projective_distance(solution.final, oracle.field) <= 1e-6
        assert solution.diagnostics[-1].residual <= 1e-6
        assert min(d.min_abs_f for d in solution.diagnostics) > 0.3

    def test_dense_leaves_required(self):
        params = FoliationParams.from_strings("0", "0")
        mu = FourierField.constant(0.1, TORUS3, 1)
        with pytest.raises(DomainError, match="leaves not dense"):
            integrate_homotopy(params, BeltramiField.from_field(mu))

    def test_beltrami_bound(self):
        with pytest.raises(BeltramiBoundError, match="Beltrami bound violated"):
            BeltramiField.from_field(FourierField.constant(1.2, TORUS3, 1))
        with pytest.raises(ValidationError):
            BeltramiField.from_field(FourierField.zeros(TORUS3, 1), oversample=2)

    @pytest.mark.slow
    def test_refinement_reduces_spill(self, sqrt_params, rng):
        mu = smooth_beltrami(rng, 8, 0.3)
        results = refinement_study(sqrt_params, mu, [4, 6, 8])
        assert [c for c, _ in results] == [4, 6, 8]
        residuals = [r for _, r in results]
        assert residuals[0] > residuals[1] > residuals[2]
        assert residuals[2] <= 0.1 * residuals[0]

    def test_vanish_guard(self, sqrt_params, rng):
        mu = smooth_beltrami(rng, 2, 0.3)
        config = SolverConfig(vanish_guard=0.999999)
        with pytest.raises(VanishingError, match="possible zero of f"):
            integrate_homotopy(sqrt_params, BeltramiField.from_field(mu), config)

    def test_step_limit(self, sqrt_params, rng):
        mu = smooth_beltrami(rng, 2, 0.3)
        config = replace(SolverConfig(), max_steps=1)
        with pytest.raises(ConvergenceError):
            integrate_homotopy(sqrt_params, BeltramiField.from_field(mu), config)


class TestPathsAndSteps:
    def test_rk4_step_exponential(self):
        y = FourierField.constant(1.0, TORUS3, 1)
        result = rk4_step(lambda t, f: f, 0.0, y, 0.1)
        assert result.coefficient((0, 0, 0)) == pytest.approx(math.exp(0.1), abs=1e-6)

    def test_path_rules(self):
        mu = FourierField.constant(0.4, TORUS3, 1)
        nu, nu_dot = HomotopyPath(mu, "sine")(1.0)
        assert nu.coefficient((0, 0, 0)) == pytest.approx(0.4)
        assert abs(nu_dot.coefficient((0, 0, 0))) < 1e-15
        with pytest.raises(ValidationError):
            HomotopyPath(mu, "zigzag")

    def test_custom_path_must_start_at_zero(self):
        mu = FourierField.constant(0.4, TORUS3, 1)
        with pytest.raises(ValidationError):
            HomotopyPath(mu, "custom", lambda t: (mu, mu))
        with pytest.raises(ValidationError):
            HomotopyPath(mu, "custom")

    def test_custom_path_quadratic(self, sqrt_params):
        mu = FourierField.constant(0.5, TORUS3, 1)
        path = HomotopyPath(mu, "custom", lambda t: (mu * (t * t), mu * (2 * t)))
        solution = integrate_homotopy(sqrt_params, BeltramiField.from_field(mu), path=path)
        assert norm(solution.final - 2.0) < 1e-8
