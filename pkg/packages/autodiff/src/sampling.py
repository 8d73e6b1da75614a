"""Differentiable multilinear resampling."""

import numpy as np

from packages.autodiff.src.node import GraphError, Node, as_node
from packages.tensor.src.image import ImageTensor
from packages.tensor.src.sampling import interpolate, interpolate_adjoint


def diff_sample(img: Node | ImageTensor | np.ndarray, coords: Node) -> Node:
    """Sample ``img`` at normalized ``coords`` (N × d).

    The coordinate gradient is the piecewise multilinear slope (zero on
    clamped components). The image receives a gradient only when it is a
    trainable node.
    """
    if isinstance(img, ImageTensor):
        img = img.as_array()
    image = as_node(img)
    if coords.value.ndim != 2 or coords.shape[1] != image.value.ndim:
        raise GraphError(f"{coords.shape} coordinates for a {image.value.ndim}D image")
    values, slopes = interpolate(image.value, coords.value, with_gradient=True)

    def vjp(g: np.ndarray) -> tuple[np.ndarray | None, np.ndarray]:
        grad_image = (
            interpolate_adjoint(image.shape, coords.value, g) if image.requires_grad else None
        )
        return grad_image, g[:, None] * slopes

    return Node(values, (image, coords), vjp, "sample")
