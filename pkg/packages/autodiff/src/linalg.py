"""
Differentiable TPS linear algebra

Graph ops for the registration half of the pipeline: assembling the TPS
system from landmark nodes, solving it, evaluating the spline on a grid and
the Frobenius condition number used as a regularizer.

The solve is differentiated implicitly. For W = A⁻¹B and upstream cotangent
Ḡ of W:

    B̄ = A⁻ᵀ Ḡ          Ā = −B̄ Wᵀ

which reuses the forward LU factors (one transposed solve, no unrolled
factorization). For κ_F(A) = ‖A‖_F‖M‖_F with M = A⁻¹:

    ∂κ/∂A = (‖M‖_F/‖A‖_F)·A − (‖A‖_F/‖M‖_F)·MᵀMMᵀ

References:
- Gould et al. (2016). "On Differentiating Parameterized Argmin and Argmax
  Problems with Application to Bi-level Optimization"
"""

import numpy as np
from scipy.linalg import lu_solve
from scipy.spatial.distance import cdist

from packages.autodiff.src.node import GraphError, Node
from packages.registration.src.tps import (
    kernel_from_squared,
    kernel_slope_from_squared,
    lu_factorize,
    rhs_matrix,
    system_matrix,
)


def _check_landmarks(node: Node, name: str) -> tuple[int, int]:
    if node.value.ndim != 2 or node.shape[1] not in (2, 3):
        raise GraphError(f"{name} must be K × 2 or K × 3, got {node.shape}")
    return node.shape


def _pairwise_pull(weights: np.ndarray, moving: np.ndarray, fixed: np.ndarray) -> np.ndarray:
    """Σ_j weights[j, k]·(moving_k − fixed_j) for every k."""
    return weights.sum(axis=0)[:, None] * moving - weights.T @ fixed


def diff_tps_system(l_T: Node) -> Node:
    """A = [[Kmat, P], [Pᵀ, 0]] as a function of the target landmarks."""
    k, d = _check_landmarks(l_T, "l_T")
    targets = l_T.value
    r2 = cdist(targets, targets, "sqeuclidean")
    slope = kernel_slope_from_squared(r2, d)

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        symmetric = g[:k, :k] + g[:k, :k].T
        grad = _pairwise_pull(symmetric * slope, targets, targets)
        grad += g[:k, k + 1 :] + g[k + 1 :, :k].T
        return (grad,)

    return Node(system_matrix(targets), (l_T,), vjp, "tps_system")


def diff_tps_rhs(l_S: Node) -> Node:
    """B = [l_S ; 0]."""
    k, _ = _check_landmarks(l_S, "l_S")
    return Node(rhs_matrix(l_S.value), (l_S,), lambda g: (g[:k].copy(),), "tps_rhs")


def diff_linear_solve(A: Node, B: Node) -> Node:
    """W = A⁻¹B, differentiated implicitly.

    Raises:
        SingularSystemError: if A is numerically singular
    """
    if A.value.ndim != 2 or A.shape[0] != A.shape[1] or B.shape[0] != A.shape[0]:
        raise GraphError(f"solve: A {A.shape} and B {B.shape} do not conform")
    factors = lu_factorize(A.value)
    W = lu_solve(factors, B.value)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_B = lu_solve(factors, g, trans=1)
        return -grad_B @ W.T, grad_B

    return Node(W, (A, B), vjp, "solve")


def diff_tps_solve(l_S: Node, l_T: Node, system: Node | None = None) -> Node:
    """Assemble and solve for the spline coefficients W.

    Args:
        l_S: Source landmarks (K × d)
        l_T: Target landmarks (K × d)
        system: A previously built ``diff_tps_system(l_T)`` to share with
            other consumers such as the condition-number regularizer

    Returns:
        W node of shape (K+d+1) × d
    """
    if l_S.shape != l_T.shape:
        raise GraphError(f"landmark shapes differ: {l_S.shape} vs {l_T.shape}")
    A = diff_tps_system(l_T) if system is None else system
    return diff_linear_solve(A, diff_tps_rhs(l_S))


def diff_condition(A: Node) -> Node:
    """κ_F(A) = ‖A‖_F·‖A⁻¹‖_F as a scalar node."""
    if A.value.ndim != 2 or A.shape[0] != A.shape[1]:
        raise GraphError(f"condition number needs a square matrix, got {A.shape}")
    M = lu_solve(lu_factorize(A.value), np.eye(A.shape[0]))
    norm_A = float(np.sqrt(np.sum(A.value * A.value)))
    norm_M = float(np.sqrt(np.sum(M * M)))
    kappa = float(np.sqrt(np.sum(A.value * A.value) * np.sum(M * M)))

    def vjp(g: np.ndarray) -> tuple[np.ndarray]:
        grad = (norm_M / norm_A) * A.value - (norm_A / norm_M) * (M.T @ M @ M.T)
        return (float(g) * grad,)

    return Node(np.array(kappa), (A,), vjp, "condition")


def diff_tps_evaluate(W: Node, l_T: Node, points: np.ndarray) -> Node:
    """T(x) for every row of ``points`` (constant N × d), as an N × d node.

    Gradients flow to W and to l_T, which enters through the kernel
    columns Φ_nk = U(‖x_n − l_T,k‖).
    """
    k, d = _check_landmarks(l_T, "l_T")
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != d:
        raise GraphError(f"{points.shape} points for {d}D landmarks")
    if W.shape != (k + d + 1, d):
        raise GraphError(f"W must be {(k + d + 1, d)}, got {W.shape}")
    r2 = cdist(points, l_T.value, "sqeuclidean")
    phi = kernel_from_squared(r2, d)
    coeffs = W.value
    mapped = phi @ coeffs[:k] + coeffs[k] + points @ coeffs[k + 1 :]

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        grad_W = np.vstack([phi.T @ g, g.sum(axis=0, keepdims=True), points.T @ g])
        # (N × K): cotangent of Φ, then through the kernel slope
        weights = (g @ coeffs[:k].T) * kernel_slope_from_squared(r2, d)
        grad_T = _pairwise_pull(weights, l_T.value, points)
        return grad_W, grad_T

    return Node(mapped, (W, l_T), vjp, "tps_evaluate")
