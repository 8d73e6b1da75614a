"""
Principal Component Analysis of shape descriptors

PCA by thin SVD of the centered data. Components are the right singular
vectors, variances the squared singular values over n − 1. Each component
is signed so that its largest-magnitude entry is positive, which makes fits
reproducible across LAPACK builds.

References:
- Cootes, T. F., et al. (1995). "Active Shape Models - Their Training and
  Application"
"""

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.linalg import svd

from packages.analysis.src.shape import ShapeMatrix

# slack on the cumulative variance ratio so a target of exactly 1.0 is reachable
RATIO_SLACK = 1e-12


@dataclass(frozen=True)
class PcaModel:
    """Fitted PCA.

    Attributes:
        mean: Column means (p,)
        components: Orthonormal rows (m × p), most variance first
        variances: Variance along each component (m,), non-increasing
        total_variance: Sum of all sample variances, retained or not
    """

    mean: np.ndarray
    components: np.ndarray
    variances: np.ndarray
    total_variance: float

    @property
    def m(self) -> int:
        return self.components.shape[0]

    @property
    def explained_ratio(self) -> np.ndarray:
        if self.total_variance == 0.0:
            return np.zeros(self.m)
        return self.variances / self.total_variance

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Scores of rows of X (n × p) or of a single vector (p,)."""
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.mean.shape[0]:
            raise ValueError(f"{X.shape[-1]} features for a PCA fit on {self.mean.shape[0]}")
        return (X - self.mean) @ self.components.T

    def inverse_transform(self, scores: np.ndarray) -> np.ndarray:
        return np.asarray(scores, dtype=np.float64) @ self.components + self.mean

    def to_dict(self) -> dict[str, Any]:
        return {
            "m": self.m,
            "variances": self.variances.tolist(),
            "explained_ratio": self.explained_ratio.tolist(),
        }


def _as_array(X: ShapeMatrix | np.ndarray) -> np.ndarray:
    values = X.values if isinstance(X, ShapeMatrix) else np.asarray(X, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"PCA needs an n × p matrix, got shape {values.shape}")
    if values.shape[0] < 2:
        raise ValueError(f"PCA needs at least 2 rows, got {values.shape[0]}")
    return values


def principal_axes(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean, sign-fixed right singular vectors and their variances."""
    mean = values.mean(axis=0)
    _, s, vt = svd(values - mean, full_matrices=False)
    pivots = np.argmax(np.abs(vt), axis=1)
    signs = np.sign(vt[np.arange(len(vt)), pivots])
    vt = vt * np.where(signs == 0, 1.0, signs)[:, None]
    return mean, vt, s**2 / (values.shape[0] - 1)


def fit_pca(X: ShapeMatrix | np.ndarray, variance_target: float = 0.95) -> PcaModel:
    """Keep the fewest components whose cumulative variance reaches the target.

    Args:
        X: n × p data, n ≥ 2
        variance_target: Fraction of total variance to retain, in (0, 1]

    Returns:
        PcaModel; zero-variance data gives one component with zero variance
    """
    if not 0.0 < variance_target <= 1.0:
        raise ValueError(f"variance_target must lie in (0, 1], got {variance_target}")
    values = _as_array(X)
    mean, vt, variances = principal_axes(values)
    total = float(variances.sum())
    if total == 0.0:
        basis = np.zeros((1, values.shape[1]))
        basis[0, 0] = 1.0
        return PcaModel(mean=mean, components=basis, variances=np.zeros(1), total_variance=0.0)
    cumulative = np.cumsum(variances) / total
    m = int(np.searchsorted(cumulative, variance_target - RATIO_SLACK)) + 1
    m = min(m, len(variances))
    return PcaModel(
        mean=mean, components=vt[:m], variances=variances[:m], total_variance=total
    )


def embed_2d(X: ShapeMatrix | np.ndarray) -> np.ndarray:
    """Scores on the first two principal components (n × 2).

    With fewer than two directions of variation the missing columns are zero.
    """
    values = _as_array(X)
    mean, vt, _ = principal_axes(values)
    embedding = np.zeros((values.shape[0], 2))
    take = min(2, vt.shape[0])
    embedding[:, :take] = (values - mean) @ vt[:take].T
    return embedding
