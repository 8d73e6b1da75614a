"""Tests for Mahalanobis Z-scores against a base cohort."""

import numpy as np
import pytest

from packages.analysis.src.shape import shape_matrix_from_landmarks
from packages.analysis.src.zscore import GaussianBase, cohort_zscores, fit_zscore, zscore

SCALES = np.array([3.0, 2.0, 1.0, 0.5, 0.25, 0.1])


@pytest.fixture
def base():
    return np.random.default_rng(11).normal(size=(200, 6)) * SCALES


class TestZScore:
    """Test the base-cohort protocol."""

    def test_base_mean_scores_zero(self, base):
        model = fit_zscore(base)
        assert np.isclose(zscore(model, base.mean(axis=0)), 0.0, atol=1e-10)

    def test_chi_square_mean(self, base):
        """E[Z²] over the base cohort matches the retained dimension."""
        model = fit_zscore(base, 0.95)
        mean_square = np.mean(model.scores(base) ** 2)
        assert abs(mean_square - model.pca.m) <= 0.2 * model.pca.m

    def test_shifted_cohort_scores_higher(self, base):
        model = fit_zscore(base, 0.95)
        direction = model.pca.components[0]
        sigma = np.sqrt(model.pca.variances[0])
        shifted = np.random.default_rng(12).normal(size=(200, 6)) * SCALES
        shifted += 3.0 * sigma * direction
        assert model.scores(shifted).mean() > model.scores(base).mean()

    def test_single_vector_only(self, base):
        with pytest.raises(ValueError):
            zscore(fit_zscore(base), base[:2])

    def test_dimension_mismatch(self, base):
        with pytest.raises(ValueError):
            zscore(fit_zscore(base), np.zeros(4))


class TestGaussianBase:
    """Test the Mahalanobis distance itself."""

    def test_affine_invariance(self):
        rng = np.random.default_rng(2)
        points = rng.normal(size=(80, 3)) * np.array([2.0, 1.0, 0.5])
        queries = rng.normal(size=(10, 3))
        A = np.linalg.qr(rng.normal(size=(3, 3)))[0] @ np.diag([2.0, 0.7, 1.3])
        b = rng.normal(size=3)
        before = GaussianBase.fit(points).distance(queries)
        after = GaussianBase.fit(points @ A.T + b).distance(queries @ A.T + b)
        assert np.allclose(before, after, rtol=1e-6)

    def test_identity_covariance_is_euclidean(self):
        points = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        base = GaussianBase.fit(points * np.sqrt(1.5))
        assert np.isclose(base.distance(np.array([3.0, 4.0])), 5.0, rtol=1e-7)

    def test_degenerate_direction_still_scores(self):
        points = np.column_stack([np.linspace(-1, 1, 10), np.zeros(10)])
        base = GaussianBase.fit(points)
        assert np.all(np.isfinite(base.distance(np.array([[0.0, 1e-3], [0.5, 0.0]]))))


class TestCohortZScores:
    """Test scoring a labelled shape matrix."""

    def test_frame(self):
        rng = np.random.default_rng(4)
        normal = rng.normal(scale=0.05, size=(30, 4, 2))
        abnormal = rng.normal(scale=0.05, size=(10, 4, 2)) + 0.3
        shape = shape_matrix_from_landmarks(
            np.concatenate([normal, abnormal]), labels=["normal"] * 30 + ["metopic"] * 10
        )
        frame = cohort_zscores(shape, "normal")
        assert list(frame.columns) == ["id", "label", "zscore"]
        assert len(frame) == 40
        means = frame.groupby("label")["zscore"].mean()
        assert means["metopic"] > means["normal"]

    def test_base_too_small(self):
        shape = shape_matrix_from_landmarks(np.zeros((3, 3, 2)), labels=["a", "b", "b"])
        with pytest.raises(ValueError):
            cohort_zscores(shape, "a")
