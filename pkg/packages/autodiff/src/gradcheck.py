"""
Finite-difference gradient checking

Central differences on float64 with h = 1e-5, compared against the
analytic gradient from ``backward``. Used by every gradient test.
"""

from typing import Callable

import numpy as np

from packages.autodiff.src.node import Node, backward, constant, leaf

STEP = 1e-5


def numeric_gradient(
    f: Callable[[np.ndarray], float], x: np.ndarray, h: float = STEP
) -> np.ndarray:
    """Central-difference gradient of a scalar function of an array."""
    x = np.array(x, dtype=np.float64, order="C")
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = f(x)
        flat[i] = original - h
        lower = f(x)
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a − n| / max(max|a|, max|n|), 0 when both vanish."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))))
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric))) / scale


def check_gradient(
    build: Callable[[Node], Node], x: np.ndarray, h: float = STEP
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic and numeric gradients of ``build`` at ``x``.

    Args:
        build: Maps an input node to a scalar root node
        x: Point of evaluation
        h: Finite-difference step

    Returns:
        (analytic, numeric), both shaped like x
    """
    x_node = leaf(x)
    backward(build(x_node))
    analytic = x_node.grad if x_node.grad is not None else np.zeros_like(x_node.value)
    numeric = numeric_gradient(lambda v: float(build(constant(v)).value), x, h)
    return analytic, numeric
