"""
Mahalanobis Z-scores against a base cohort

A base cohort (for example the normal shapes) is reduced by PCA to the
components explaining a target share of its variance. The PCA scores of the
base are modelled as a Gaussian, and any shape is scored by its Mahalanobis
distance from that Gaussian:

    Z(x) = sqrt((s(x) − μ)ᵀ Σ⁻¹ (s(x) − μ)),    s(x) = PCA scores of x

Σ gets a ridge of RIDGE · trace(Σ)/m on its diagonal before the Cholesky
factorization, so a cohort with a degenerate direction still scores.

References:
- Mahalanobis, P. C. (1936). "On the generalized distance in statistics"
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import cho_factor, cho_solve

from packages.analysis.src.pca import PcaModel, fit_pca
from packages.analysis.src.shape import ShapeMatrix

RIDGE = 1e-8


@dataclass(frozen=True)
class GaussianBase:
    """Mean and (ridged) covariance of base-cohort points in some feature space."""

    mean: np.ndarray
    covariance: np.ndarray
    factor: tuple[np.ndarray, bool]

    @classmethod
    def fit(cls, points: np.ndarray) -> "GaussianBase":
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[0] < 2:
            raise ValueError(f"base distribution needs ≥ 2 points in rows, got {points.shape}")
        m = points.shape[1]
        covariance = np.atleast_2d(np.cov(points, rowvar=False))
        trace = float(np.trace(covariance))
        ridge = RIDGE * trace / m if trace > 0.0 else RIDGE
        covariance = covariance + ridge * np.eye(m)
        return cls(
            mean=points.mean(axis=0),
            covariance=covariance,
            factor=cho_factor(covariance, lower=True),
        )

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Mahalanobis distance of each row (or of a single vector)."""
        points = np.asarray(points, dtype=np.float64)
        if points.shape[-1] != self.mean.shape[0]:
            raise ValueError(f"{points.shape[-1]}D point for a {self.mean.shape[0]}D base")
        centered = np.atleast_2d(points - self.mean)
        solved = cho_solve(self.factor, centered.T).T
        d2 = np.maximum(np.sum(centered * solved, axis=1), 0.0)
        distances = np.sqrt(d2)
        return distances[0] if points.ndim == 1 else distances


@dataclass(frozen=True)
class ZScoreModel:
    """PCA of the base cohort plus the Gaussian of its scores."""

    pca: PcaModel
    base: GaussianBase

    def scores(self, X: np.ndarray) -> np.ndarray:
        return self.base.distance(self.pca.transform(X))


def fit_zscore(base: ShapeMatrix | np.ndarray, variance_target: float = 0.95) -> ZScoreModel:
    """Fit PCA and the score Gaussian on the base cohort rows."""
    values = base.values if isinstance(base, ShapeMatrix) else np.asarray(base, dtype=np.float64)
    pca = fit_pca(values, variance_target)
    return ZScoreModel(pca=pca, base=GaussianBase.fit(pca.transform(values)))


def zscore(model: ZScoreModel, x: np.ndarray) -> float:
    """Mahalanobis distance of one shape vector from the base distribution."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"zscore takes one shape vector, got shape {x.shape}")
    return float(model.scores(x))


def cohort_zscores(
    shape: ShapeMatrix, base_label: str, variance_target: float = 0.95
) -> pd.DataFrame:
    """Fit on the rows labelled ``base_label`` and score every row.

    Returns:
        DataFrame with columns id, label, zscore in row order
    """
    mask = np.array([label == base_label for label in shape.labels])
    if mask.sum() < 2:
        raise ValueError(f"base label {base_label!r} has {mask.sum()} rows; need at least 2")
    model = fit_zscore(shape.rows(mask), variance_target)
    return pd.DataFrame(
        {"id": shape.ids, "label": shape.labels, "zscore": model.scores(shape.values)}
    )
