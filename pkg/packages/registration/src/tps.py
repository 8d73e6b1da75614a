"""
Thin-Plate-Spline Registration

Landmark-guided TPS warp between an image pair:

    (i)   assemble A from the target landmarks l_T and B from the source
          landmarks l_S
    (ii)  solve A·W = B for the spline coefficients W
    (iii) pull every target-grid point x through T(x) and sample the source
          there (backward warping) to form the registered image I_R

System layout for K landmarks in d dimensions (n = K + d + 1):

    A = [[Kmat, P], [Pᵀ, 0]]    Kmat_ij = U(‖l_T,i − l_T,j‖),  P_i = (1, l_T,i)
    B = [l_S ; 0]

    T(x) = W_K+0 + Σ_a x_a·W_K+1+a + Σ_k w_k·U(‖x − l_T,k‖)

Kernels: U(r) = r²·log r in 2D (U(0) = 0) and U(r) = r in 3D. The 3D
kernel is the polyharmonic choice for three dimensions; any global sign of
U is absorbed by W.

References:
- Bookstein, F. L. (1989). "Principal Warps: Thin-Plate Splines and the
  Decomposition of Deformations"
"""

import warnings
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.spatial.distance import cdist

from packages.registration.src.landmarks import LandmarkMismatchError, LandmarkSet
from packages.tensor.src.image import DimensionMismatchError, ImageTensor, grid_coordinates
from packages.tensor.src.sampling import interpolate

PIVOT_TOLERANCE = 1e-12


class SingularSystemError(ValueError):
    """The TPS system (or a matrix to be inverted) is numerically singular."""


class UnsolvedModelError(ValueError):
    """A TPS model was evaluated before its coefficients were solved."""


def kernel_from_squared(r2: np.ndarray, d: int) -> np.ndarray:
    """U evaluated from squared distances (avoids a sqrt in 2D)."""
    r2 = np.asarray(r2, dtype=np.float64)
    if d == 2:
        safe = np.where(r2 > 0.0, r2, 1.0)
        return np.where(r2 > 0.0, 0.5 * r2 * np.log(safe), 0.0)
    if d == 3:
        return np.sqrt(r2)
    raise DimensionMismatchError(f"TPS kernel defined for d ∈ {{2, 3}}, got {d}")


def kernel_slope_from_squared(r2: np.ndarray, d: int) -> np.ndarray:
    """g(r²) with ∂U(‖p − q‖)/∂p = g·(p − q); zero at coincident points."""
    r2 = np.asarray(r2, dtype=np.float64)
    safe = np.where(r2 > 0.0, r2, 1.0)
    if d == 2:
        return np.where(r2 > 0.0, np.log(safe) + 1.0, 0.0)
    if d == 3:
        return np.where(r2 > 0.0, 1.0 / np.sqrt(safe), 0.0)
    raise DimensionMismatchError(f"TPS kernel defined for d ∈ {{2, 3}}, got {d}")


def tps_kernel(r: float | np.ndarray, d: int) -> float | np.ndarray:
    """Radial basis U(r): r²·log r in 2D, r in 3D.

    Args:
        r: Non-negative distance(s)
        d: Spatial dimension

    Returns:
        U(r), elementwise for arrays
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("TPS kernel needs r ≥ 0")
    value = kernel_from_squared(r * r, d)
    return float(value) if value.ndim == 0 else value


def system_matrix(targets: np.ndarray) -> np.ndarray:
    """Build the symmetric (K+d+1)² matrix A from target landmarks."""
    k, d = targets.shape
    r2 = cdist(targets, targets, "sqeuclidean")
    upper = np.triu(kernel_from_squared(r2, d), 1)
    n = k + d + 1
    A = np.zeros((n, n))
    A[:k, :k] = upper + upper.T
    A[:k, k] = 1.0
    A[:k, k + 1 :] = targets
    A[k:, :k] = A[:k, k:].T
    return A


def rhs_matrix(sources: np.ndarray) -> np.ndarray:
    """Build B = [l_S ; 0_{(d+1)×d}]."""
    k, d = sources.shape
    return np.vstack([sources, np.zeros((d + 1, d))])


def lu_factorize(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """LU with partial pivoting; reject pivots below 1e-12·max|A|."""
    scale = float(np.max(np.abs(A))) if A.size else 0.0
    if not np.all(np.isfinite(A)) or scale == 0.0:
        raise SingularSystemError("matrix is zero or non-finite")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(A)
    smallest = float(np.min(np.abs(np.diag(lu))))
    if smallest < PIVOT_TOLERANCE * scale:
        raise SingularSystemError(
            f"pivot {smallest:.3e} below {PIVOT_TOLERANCE:g}·max|A| ({scale:.3e})"
        )
    return lu, piv


@dataclass(frozen=True)
class TpsModel:
    """Assembled (and optionally solved) TPS system.

    Attributes:
        A: (K+d+1)² symmetric system matrix
        B: (K+d+1) × d right-hand side
        targets: Copy of l_T used to build A
        W: Solved coefficients (K nonlinear weights, then the affine part) or None
        D: Coefficients of the displacement T(x) − x, solved from l_S − l_T
    """

    A: np.ndarray
    B: np.ndarray
    targets: np.ndarray
    W: np.ndarray | None = None
    D: np.ndarray | None = None

    @property
    def K(self) -> int:
        return self.targets.shape[0]

    @property
    def d(self) -> int:
        return self.targets.shape[1]

    @property
    def nonlinear_weights(self) -> np.ndarray:
        return self._solved()[: self.K]

    @property
    def affine(self) -> np.ndarray:
        """(d+1) × d affine block: translation row, then the linear map rows."""
        return self._solved()[self.K :]

    def _solved(self) -> np.ndarray:
        if self.W is None:
            raise UnsolvedModelError("TPS model has not been solved")
        return self.W

    def _displacement(self) -> np.ndarray:
        if self.D is None:
            raise UnsolvedModelError("TPS model has not been solved")
        return self.D


def assemble(l_T: LandmarkSet, l_S: LandmarkSet) -> TpsModel:
    """Step (i): kernel matrix from l_T, right-hand side from l_S."""
    if l_T.points.shape != l_S.points.shape:
        raise LandmarkMismatchError(
            f"target {l_T.points.shape} and source {l_S.points.shape} landmark shapes differ"
        )
    if l_T.K < l_T.d + 1:
        raise LandmarkMismatchError(f"TPS needs K ≥ d + 1 = {l_T.d + 1}, got K = {l_T.K}")
    targets = l_T.points.copy()
    return TpsModel(A=system_matrix(targets), B=rhs_matrix(l_S.points), targets=targets)


def solve(model: TpsModel) -> TpsModel:
    """Step (ii): W = A⁻¹B by dense LU with partial pivoting.

    Raises:
        SingularSystemError: if A is numerically singular (e.g. coincident
            or collinear target landmarks)
    """
    factors = lu_factorize(model.A)
    W = lu_solve(factors, model.B)
    D = lu_solve(factors, rhs_matrix(model.B[: model.K] - model.targets))
    return replace(model, W=W, D=D)


def evaluate(model: TpsModel, x: np.ndarray) -> np.ndarray:
    """T(x) for one point (d,) or many points (N × d).

    Evaluated as x + (displacement spline), which equals the W form and is
    exactly the identity when l_S = l_T.
    """
    D = model._displacement()
    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    points = np.atleast_2d(points)
    if points.shape[1] != model.d:
        raise DimensionMismatchError(f"{points.shape[1]}D points for a {model.d}D model")
    phi = kernel_from_squared(cdist(points, model.targets, "sqeuclidean"), model.d)
    mapped = points + (phi @ D[: model.K] + D[model.K] + points @ D[model.K + 1 :])
    return mapped[0] if single else mapped


def warp(model: TpsModel, source: ImageTensor, out_dims: Sequence[int]) -> ImageTensor:
    """Step (iii): I_R(x) = source(T(x)) for every node x of the output grid."""
    out_dims = tuple(out_dims)
    if source.ndim != model.d or len(out_dims) != model.d:
        raise DimensionMismatchError(
            f"{model.d}D model with {source.ndim}D source and {len(out_dims)}D output"
        )
    mapped = evaluate(model, grid_coordinates(out_dims))
    values, _ = interpolate(source.as_array(), mapped)
    return ImageTensor(dims=out_dims, data=values)


def condition_frobenius(A: np.ndarray) -> float:
    """κ_F(A) = ‖A‖_F · ‖A⁻¹‖_F."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"condition number needs a square matrix, got {A.shape}")
    inverse = lu_solve(lu_factorize(A), np.eye(A.shape[0]))
    return float(np.sqrt(np.sum(A * A) * np.sum(inverse * inverse)))


def _check_same_dims(a: ImageTensor, b: ImageTensor) -> None:
    if a.dims != b.dims:
        raise DimensionMismatchError(f"image dims differ: {a.dims} vs {b.dims}")


def registration_loss(I_R: ImageTensor, I_T: ImageTensor) -> float:
    """L2 matching term: mean squared error over all pixels."""
    _check_same_dims(I_R, I_T)
    return float(np.mean((I_R.data - I_T.data) ** 2))


def relative_l2(I_R: ImageTensor, I_T: ImageTensor) -> float:
    """‖I_R − I_T‖² / ‖I_T‖², the form reported as a percentage (× 100).

    An all-zero target (a whitened constant image) gives 0.0 when the
    registered image is also all zero and inf otherwise.
    """
    _check_same_dims(I_R, I_T)
    residual = float(np.sum((I_R.data - I_T.data) ** 2))
    denom = float(np.sum(I_T.data**2))
    if denom == 0.0:
        return 0.0 if residual == 0.0 else float("inf")
    return residual / denom


@dataclass(frozen=True)
class RegistrationResult:
    """Outcome of registering one source image onto one target image."""

    model: TpsModel
    registered: ImageTensor
    mse: float
    relative_l2: float

    def to_dict(self) -> dict[str, float]:
        return {"mse": self.mse, "relative_l2": self.relative_l2}


def register_pair(
    l_S: LandmarkSet, l_T: LandmarkSet, source: ImageTensor, target: ImageTensor
) -> RegistrationResult:
    """Assemble, solve and warp, then score against the target."""
    model = solve(assemble(l_T, l_S))
    registered = warp(model, source, target.dims)
    return RegistrationResult(
        model=model,
        registered=registered,
        mse=registration_loss(registered, target),
        relative_l2=relative_l2(registered, target),
    )
