"""Tests for the TPS system, implicit solve, evaluation and κ_F gradients."""

import numpy as np
import pytest
from scipy.stats import ortho_group

from packages.autodiff.src.gradcheck import check_gradient, relative_error
from packages.autodiff.src.layers import diff_dense, diff_mse, diff_reshape, diff_sum
from packages.autodiff.src.linalg import (
    diff_condition,
    diff_linear_solve,
    diff_tps_evaluate,
    diff_tps_rhs,
    diff_tps_solve,
    diff_tps_system,
)
from packages.autodiff.src.node import GraphError, backward, constant, leaf
from packages.autodiff.src.sampling import diff_sample
from packages.registration.src.landmarks import LandmarkSet
from packages.registration.src.tps import (
    SingularSystemError,
    assemble,
    condition_frobenius,
    evaluate,
    solve,
)
from packages.tensor.src.image import grid_coordinates


def _sum_of_squares(node):
    return diff_sum(diff_mse(node, np.zeros(node.shape)))


def _weighted(node, weights):
    """Σ weights·node with weights shaped like node."""
    flat = diff_reshape(node, (node.value.size,))
    row = constant(weights.reshape(1, -1))
    return diff_sum(diff_dense(flat, row, constant(np.zeros(1))))


def _random_landmarks(seed, k=6, d=2):
    rng = np.random.default_rng(seed)
    targets = rng.uniform(-0.9, 0.9, size=(k, d))
    sources = targets + rng.normal(scale=0.05, size=(k, d))
    return sources, targets


class TestTpsSolveForward:
    """The graph forward pass reproduces the registration module."""

    def test_matches_direct_solve(self):
        sources, targets = _random_landmarks(0)
        W = diff_tps_solve(constant(sources), constant(targets))
        model = solve(assemble(LandmarkSet(targets), LandmarkSet(sources)))
        assert np.allclose(W.value, model.W, atol=1e-12)

    def test_evaluate_matches_direct(self):
        sources, targets = _random_landmarks(1, k=7, d=3)
        W = diff_tps_solve(constant(sources), constant(targets))
        points = np.random.default_rng(2).uniform(-1, 1, size=(20, 3))
        mapped = diff_tps_evaluate(W, constant(targets), points)
        model = solve(assemble(LandmarkSet(targets), LandmarkSet(sources)))
        assert np.allclose(mapped.value, evaluate(model, points), atol=1e-12)

    def test_singular_propagates(self):
        targets = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0], [-0.5, -0.5]])
        with pytest.raises(SingularSystemError):
            diff_tps_solve(constant(targets), constant(targets))

    def test_shape_mismatch(self):
        with pytest.raises(GraphError):
            diff_tps_solve(constant(np.zeros((4, 2))), constant(np.zeros((5, 2))))


class TestTpsSolveGradient:
    """Implicit differentiation against central differences."""

    def test_sum_of_squares_wrt_sources(self):
        """Σ W² as a function of l_S on a random K = 6 2D instance."""
        sources, targets = _random_landmarks(3)
        analytic, numeric = check_gradient(
            lambda n: _sum_of_squares(diff_tps_solve(n, constant(targets))), sources
        )
        assert relative_error(analytic, numeric) <= 1e-5

    def test_identity_pair_wrt_sources(self):
        """With l_S = l_T, a weighted sum of W still differentiates correctly."""
        _, targets = _random_landmarks(4)
        weights = np.random.default_rng(5).normal(size=(6 + 3, 2))

        def build(node):
            W = diff_tps_solve(node, constant(targets))
            return _weighted(W, weights)

        analytic, numeric = check_gradient(build, targets.copy())
        assert relative_error(analytic, numeric) <= 1e-5

    def test_sum_of_squares_wrt_targets_3d(self):
        sources, targets = _random_landmarks(6, k=8, d=3)
        analytic, numeric = check_gradient(
            lambda n: _sum_of_squares(diff_tps_solve(constant(sources), n)), targets
        )
        assert relative_error(analytic, numeric) <= 1e-5

    def test_fused_solve_equals_composition(self):
        """diff_tps_solve and system → rhs → linear solve give the same gradients."""
        sources, targets = _random_landmarks(7)
        fused_S, fused_T = leaf(sources), leaf(targets)
        backward(_sum_of_squares(diff_tps_solve(fused_S, fused_T)))
        split_S, split_T = leaf(sources), leaf(targets)
        W = diff_linear_solve(diff_tps_system(split_T), diff_tps_rhs(split_S))
        backward(_sum_of_squares(W))
        assert np.array_equal(fused_S.grad, split_S.grad)
        assert np.array_equal(fused_T.grad, split_T.grad)


class TestRegistrationLossGradient:
    """Full assemble → solve → evaluate → sample → MSE chain."""

    @pytest.fixture
    def setting(self):
        n = 9
        axis = np.linspace(-1.0, 1.0, n)
        y, x = np.meshgrid(axis, axis, indexing="ij")
        # bilinear in (y, x): multilinear interpolation reproduces it exactly
        source = y * x + 0.5 * y - 0.3 * x
        target = np.random.default_rng(8).normal(size=n * n)
        points = 0.6 * grid_coordinates((n, n))
        sources, targets = _random_landmarks(9, k=5)
        return source, target, points, 0.5 * sources, 0.5 * targets

    def _loss(self, l_S, l_T, source, target, points):
        W = diff_tps_solve(l_S, l_T)
        mapped = diff_tps_evaluate(W, l_T, points)
        return diff_mse(diff_sample(source, mapped), target)

    def test_wrt_targets(self, setting):
        """l_T enters both A and the evaluation kernel."""
        source, target, points, sources, targets = setting
        analytic, numeric = check_gradient(
            lambda n: self._loss(constant(sources), n, source, target, points), targets
        )
        assert relative_error(analytic, numeric) <= 1e-4

    def test_wrt_sources(self, setting):
        source, target, points, sources, targets = setting
        analytic, numeric = check_gradient(
            lambda n: self._loss(n, constant(targets), source, target, points), sources
        )
        assert relative_error(analytic, numeric) <= 1e-4


class TestEvaluateGradient:
    """Gradients of T(x) w.r.t. W and l_T."""

    def test_wrt_weights(self):
        sources, targets = _random_landmarks(10)
        W0 = diff_tps_solve(constant(sources), constant(targets)).value
        points = np.random.default_rng(11).uniform(-1, 1, size=(15, 2))
        analytic, numeric = check_gradient(
            lambda n: _sum_of_squares(diff_tps_evaluate(n, constant(targets), points)), W0
        )
        assert relative_error(analytic, numeric) <= 1e-6

    def test_wrt_targets_fixed_weights(self):
        sources, targets = _random_landmarks(12)
        W0 = constant(diff_tps_solve(constant(sources), constant(targets)).value)
        points = np.random.default_rng(13).uniform(-1, 1, size=(15, 2))
        analytic, numeric = check_gradient(
            lambda n: _sum_of_squares(diff_tps_evaluate(W0, n, points)), targets
        )
        assert relative_error(analytic, numeric) <= 1e-5


class TestConditionGradient:
    """κ_F values and the closed-form gradient."""

    def test_identity(self):
        """κ_F(I_n) = n; the derivative along I vanishes (scale invariance)."""
        A = leaf(np.eye(5))
        kappa = diff_condition(A)
        assert kappa.value == 5.0
        backward(kappa)
        assert abs(np.sum(A.grad * np.eye(5))) < 1e-12

    def test_matches_forward(self):
        A = np.random.default_rng(14).normal(size=(5, 5)) + 4.0 * np.eye(5)
        assert np.isclose(diff_condition(constant(A)).value, condition_frobenius(A), rtol=1e-14)

    def test_random_well_conditioned(self):
        A = np.random.default_rng(15).normal(size=(5, 5)) + 4.0 * np.eye(5)
        analytic, numeric = check_gradient(diff_condition, A)
        assert relative_error(analytic, numeric) <= 1e-6

    def test_on_tps_system(self):
        """κ_F of the assembled system, differentiated back to l_T."""
        _, targets = _random_landmarks(16)
        analytic, numeric = check_gradient(lambda n: diff_condition(diff_tps_system(n)), targets)
        assert relative_error(analytic, numeric) <= 1e-5

    def test_grows_near_singularity(self):
        """Shrinking the smallest singular value raises κ and the gradient norm."""
        Q = ortho_group.rvs(5, random_state=17)
        kappas, norms = [], []
        for smallest in (1e-1, 1e-2, 1e-3):
            A = leaf(Q @ np.diag([1.0, 0.9, 0.8, 0.7, smallest]) @ Q.T)
            kappa = diff_condition(A)
            backward(kappa)
            kappas.append(float(kappa.value))
            norms.append(float(np.linalg.norm(A.grad)))
        assert kappas == sorted(kappas)
        assert norms == sorted(norms)

    def test_singular_rejected(self):
        with pytest.raises(SingularSystemError):
            diff_condition(constant(np.ones((3, 3))))
