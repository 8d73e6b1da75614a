"""
Spectral clustering of shape descriptors

    W_ij = exp(−‖x_i − x_j‖² / (2σ²)),  σ = median pairwise distance,  W_ii = 0
    L_sym = I − D^{-1/2} W D^{-1/2}

The eigenvectors of the k smallest eigenvalues of L_sym, row-normalized,
form the spectral embedding; k-means on that embedding gives the labels.
k-means starts from a farthest-point seeding whose first center is drawn
from the seed, so the whole fit is deterministic.

New points take the label of their nearest training point in input space.

References:
- Ng, A. Y., Jordan, M. I., Weiss, Y. (2001). "On Spectral Clustering:
  Analysis and an algorithm"
- von Luxburg, U. (2007). "A Tutorial on Spectral Clustering"
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist, squareform
from sklearn.cluster import KMeans

from packages.analysis.src.shape import ShapeMatrix
from packages.tensor.src.rng import make_rng

CLUSTER_STREAM = 17
MAX_ITER = 100


@dataclass
class SpectralClustering:
    """Fitted clustering state.

    Attributes:
        points: Training rows (n × p)
        labels: Cluster of each training row
        embedding: Row-normalized spectral embedding (n × k)
        sigma: Affinity bandwidth used
    """

    points: np.ndarray
    labels: np.ndarray
    embedding: np.ndarray
    sigma: float
    _tree: cKDTree | None = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return self.embedding.shape[1]

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.points)
        return self._tree


def _values(X: ShapeMatrix | np.ndarray) -> np.ndarray:
    values = X.values if isinstance(X, ShapeMatrix) else np.asarray(X, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"clustering needs an n × p matrix, got shape {values.shape}")
    return values


def affinity(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Gaussian affinity with a zero diagonal, and the bandwidth σ."""
    distances = pdist(values)
    sigma = float(np.median(distances)) if len(distances) else 0.0
    if sigma == 0.0:
        sigma = 1.0
    W = squareform(np.exp(-(distances**2) / (2.0 * sigma**2)))
    return W, sigma


def spectral_embedding(W: np.ndarray, k: int) -> np.ndarray:
    """Row-normalized eigenvectors of the k smallest eigenvalues of L_sym."""
    degree = W.sum(axis=1)
    inv_sqrt = np.where(degree > 0.0, 1.0 / np.sqrt(np.where(degree > 0.0, degree, 1.0)), 0.0)
    L = np.eye(len(W)) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    _, vectors = eigh(L, subset_by_index=[0, k - 1])
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors / np.where(norms > 0.0, norms, 1.0)


def farthest_point_centers(points: np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """k rows chosen greedily to be far apart; ties go to the lowest index."""
    first = int(make_rng(seed, CLUSTER_STREAM).integers(len(points)))
    chosen = [first]
    nearest = np.linalg.norm(points - points[first], axis=1)
    for _ in range(1, k):
        index = int(np.argmax(nearest))
        chosen.append(index)
        nearest = np.minimum(nearest, np.linalg.norm(points - points[index], axis=1))
    return points[chosen].copy()


def spectral_cluster(X: ShapeMatrix | np.ndarray, k: int, seed: int = 0) -> SpectralClustering:
    """Cluster the rows of X into k groups.

    Args:
        X: n × p descriptors
        k: Number of clusters, 2 ≤ k ≤ n
        seed: Seed for the first k-means center

    Returns:
        SpectralClustering with labels in 0..k−1 and the spectral embedding
    """
    values = _values(X)
    n = values.shape[0]
    if k < 2 or k > n:
        raise ValueError(f"need 2 ≤ k ≤ n, got k = {k} for n = {n}")
    W, sigma = affinity(values)
    embedding = spectral_embedding(W, k)
    centers = farthest_point_centers(embedding, k, seed)
    kmeans = KMeans(n_clusters=k, init=centers, n_init=1, max_iter=MAX_ITER)
    labels = kmeans.fit_predict(embedding)
    return SpectralClustering(
        points=values.copy(), labels=labels.astype(np.intp), embedding=embedding, sigma=sigma
    )


def assign_clusters(model: SpectralClustering, X_new: ShapeMatrix | np.ndarray) -> np.ndarray:
    """Label of the nearest training row for each new row (or a single vector)."""
    values = X_new.values if isinstance(X_new, ShapeMatrix) else np.asarray(X_new, float)
    single = values.ndim == 1
    values = np.atleast_2d(values)
    if values.shape[1] != model.points.shape[1]:
        raise ValueError(
            f"{values.shape[1]} features for a clustering fit on {model.points.shape[1]}"
        )
    _, index = model.tree().query(values, k=1)
    labels = model.labels[np.asarray(index, dtype=np.intp)]
    return labels[0] if single else labels
