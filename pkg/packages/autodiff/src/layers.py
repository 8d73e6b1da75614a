"""
Differentiable layer operations

Elementwise activations, dense and convolution layers, plus the handful of
structural ops (reshape, row concatenation, sums, MSE) the landmark
pipeline composes. Convolutions are 3-wide per spatial axis, zero padded by
1, with stride 1 or 2; input layout is (channels, *spatial).
"""

import itertools

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from packages.autodiff.src.node import GraphError, Node

KERNEL_SIZE = 3
PADDING = 1


def diff_add(a: Node, b: Node) -> Node:
    if a.shape != b.shape:
        raise GraphError(f"add: shapes {a.shape} and {b.shape} differ")
    return Node(a.value + b.value, (a, b), lambda g: (g, g), "add")


def diff_scale(a: Node, factor: float) -> Node:
    return Node(factor * a.value, (a,), lambda g: (factor * g,), "scale")


def diff_sum(a: Node) -> Node:
    return Node(np.sum(a.value), (a,), lambda g: (np.full(a.shape, float(g)),), "sum")


def diff_reshape(a: Node, shape: tuple[int, ...]) -> Node:
    return Node(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def diff_concat_rows(a: Node, b: Node) -> Node:
    """Stack b's rows under a's rows."""
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[1]:
        raise GraphError(f"concat: incompatible shapes {a.shape} and {b.shape}")
    rows = a.shape[0]
    return Node(
        np.vstack([a.value, b.value]), (a, b), lambda g: (g[:rows], g[rows:]), "concat"
    )


def diff_mse(a: Node, target: np.ndarray) -> Node:
    """Mean squared error against a constant target of the same shape."""
    target = np.asarray(target, dtype=np.float64)
    if a.shape != target.shape:
        raise GraphError(f"mse: shapes {a.shape} and {target.shape} differ")
    residual = a.value - target
    return Node(
        np.mean(residual**2), (a,), lambda g: (2.0 * float(g) * residual / residual.size,), "mse"
    )


def diff_relu(x: Node) -> Node:
    """max(0, x); the subgradient at 0 is 0."""
    mask = x.value > 0.0
    return Node(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,), "relu")


def diff_tanh(x: Node) -> Node:
    out = np.tanh(x.value)
    return Node(out, (x,), lambda g: (g * (1.0 - out * out),), "tanh")


def diff_dense(x: Node, weights: Node, bias: Node) -> Node:
    """W·x + b for a vector x."""
    if x.value.ndim != 1 or weights.value.ndim != 2 or weights.shape[1] != x.shape[0]:
        raise GraphError(f"dense: weights {weights.shape} cannot apply to input {x.shape}")
    if bias.shape != (weights.shape[0],):
        raise GraphError(f"dense: bias {bias.shape} for {weights.shape[0]} outputs")

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return weights.value.T @ g, np.outer(g, x.value), g

    return Node(weights.value @ x.value + bias.value, (x, weights, bias), vjp, "dense")


def conv_output_size(n: int, stride: int) -> int:
    """Spatial size after a padded 3-wide convolution: ceil(n / stride)."""
    return -(-n // stride)


def _windows(padded: np.ndarray, stride: int, out_shape: tuple[int, ...]) -> np.ndarray:
    """(C, *out, 3, ..., 3) view of every receptive field."""
    d = padded.ndim - 1
    view = sliding_window_view(padded, (KERNEL_SIZE,) * d, axis=tuple(range(1, d + 1)))
    picks = tuple(slice(0, stride * (n - 1) + 1, stride) for n in out_shape)
    return view[(slice(None),) + picks]


def diff_conv(x: Node, kernel: Node, bias: Node, stride: int = 1) -> Node:
    """Cross-correlation with zero padding 1 plus a per-channel bias.

    Args:
        x: Input of shape (C_in, *spatial), spatial rank 2 or 3
        kernel: (C_out, C_in, 3, ..., 3)
        bias: (C_out,)
        stride: 1 or 2

    Returns:
        Node of shape (C_out, *ceil(spatial / stride))
    """
    d = x.value.ndim - 1
    if stride not in (1, 2):
        raise GraphError(f"conv stride must be 1 or 2, got {stride}")
    if kernel.value.ndim != d + 2 or kernel.shape[2:] != (KERNEL_SIZE,) * d:
        raise GraphError(f"conv kernel {kernel.shape} does not fit a {d}D input")
    if kernel.shape[1] != x.shape[0]:
        raise GraphError(f"conv expects {kernel.shape[1]} input channels, got {x.shape[0]}")
    if bias.shape != (kernel.shape[0],):
        raise GraphError(f"conv bias {bias.shape} for {kernel.shape[0]} output channels")

    spatial = x.shape[1:]
    out_shape = tuple(conv_output_size(n, stride) for n in spatial)
    padded = np.pad(x.value, [(0, 0)] + [(PADDING, PADDING)] * d)
    windows = _windows(padded, stride, out_shape)
    kernel_axes = list(range(1, d + 2))
    window_axes = [0] + list(range(d + 1, 2 * d + 1))
    out = np.tensordot(kernel.value, windows, axes=(kernel_axes, window_axes))
    out += bias.value.reshape((-1,) + (1,) * d)

    def vjp(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        spatial_axes = list(range(1, d + 1))
        grad_kernel = np.tensordot(g, windows, axes=(spatial_axes, spatial_axes))
        grad_bias = g.sum(axis=tuple(spatial_axes))
        # (*out, C_in, 3, ..., 3): cotangent of every window element
        grad_windows = np.tensordot(g, kernel.value, axes=([0], [0]))
        grad_padded = np.zeros_like(padded)
        for offset in itertools.product(range(KERNEL_SIZE), repeat=d):
            target = (slice(None),) + tuple(
                slice(k, k + stride * (n - 1) + 1, stride) for k, n in zip(offset, out_shape)
            )
            contribution = grad_windows[(Ellipsis, slice(None)) + offset]
            grad_padded[target] += np.moveaxis(contribution, -1, 0)
        interior = (slice(None),) + (slice(PADDING, -PADDING),) * d
        return grad_padded[interior], grad_kernel, grad_bias

    return Node(out, (x, kernel, bias), vjp, "conv")
