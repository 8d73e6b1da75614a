"""
Pairwise registration loss

For a (source, target) pair the detector proposes landmarks on both images,
a TPS warp is solved from them and the source is resampled onto the target
grid:

    L = MSE(I_T, I_R) + λ·κ_F(A)

The network sees (optionally noisy) copies of the images while the matching
term always uses the clean whitened originals.
"""

from dataclasses import dataclass

import numpy as np

from packages.autodiff.src.layers import diff_add, diff_mse, diff_scale
from packages.autodiff.src.linalg import (
    diff_condition,
    diff_tps_evaluate,
    diff_tps_solve,
    diff_tps_system,
)
from packages.autodiff.src.node import Node, backward, leaf
from packages.autodiff.src.sampling import diff_sample
from packages.network.src.landmark_net import NetParams, constant_weights, forward
from packages.tensor.src.image import DimensionMismatchError, ImageTensor, grid_coordinates


class NonFiniteLossError(ValueError):
    """The loss or one of its gradients is NaN or infinite."""


@dataclass(frozen=True)
class LossTerms:
    """Loss value and its two components for one pair."""

    total: float
    match: float
    reg: float

    def to_dict(self) -> dict[str, float]:
        return {"total": self.total, "match": self.match, "reg": self.reg}

    def is_finite(self) -> bool:
        return bool(np.isfinite([self.total, self.match, self.reg]).all())


@dataclass(frozen=True)
class LossGraph:
    total: Node
    match: Node
    reg: Node

    def terms(self) -> LossTerms:
        return LossTerms(
            total=float(self.total.value), match=float(self.match.value), reg=float(self.reg.value)
        )


def registration_graph(
    l_S: Node, l_T: Node, source: ImageTensor, target: ImageTensor, lambda_: float
) -> LossGraph:
    """Matching and κ_F terms for given landmark nodes.

    Raises:
        SingularSystemError: if the TPS system built from l_T is singular
    """
    if source.dims != target.dims:
        raise DimensionMismatchError(f"pair dims differ: {source.dims} vs {target.dims}")
    A = diff_tps_system(l_T)
    W = diff_tps_solve(l_S, l_T, system=A)
    mapped = diff_tps_evaluate(W, l_T, grid_coordinates(target.dims))
    registered = diff_sample(source, mapped)
    match = diff_mse(registered, target.data)
    reg = diff_condition(A)
    return LossGraph(total=diff_add(match, diff_scale(reg, lambda_)), match=match, reg=reg)


def pair_graph(
    params: NetParams,
    weights: dict[str, Node],
    I_S: ImageTensor,
    I_T: ImageTensor,
    lambda_: float,
    net_inputs: tuple[ImageTensor, ImageTensor] | None = None,
) -> LossGraph:
    """Full detector → TPS → resample → loss graph for one pair."""
    in_S, in_T = net_inputs if net_inputs is not None else (I_S, I_T)
    l_S = forward(params, in_S, weights)
    l_T = forward(params, in_T, weights)
    return registration_graph(l_S, l_T, I_S, I_T, lambda_)


def loss_forward(
    params: NetParams,
    I_S: ImageTensor,
    I_T: ImageTensor,
    lambda_: float,
    net_inputs: tuple[ImageTensor, ImageTensor] | None = None,
) -> LossTerms:
    """(total, match, reg) without building gradients."""
    return pair_graph(params, constant_weights(params), I_S, I_T, lambda_, net_inputs).terms()


def loss_and_gradients(
    params: NetParams,
    I_S: ImageTensor,
    I_T: ImageTensor,
    lambda_: float,
    net_inputs: tuple[ImageTensor, ImageTensor] | None = None,
) -> tuple[LossTerms, dict[str, np.ndarray]]:
    """Loss terms plus d(total)/d(parameter) for every detector tensor."""
    weights = {name: leaf(value) for name, value in params.weights.items()}
    graph = pair_graph(params, weights, I_S, I_T, lambda_, net_inputs)
    terms = graph.terms()
    if not terms.is_finite():
        return terms, {}
    backward(graph.total)
    grads = {
        name: node.grad if node.grad is not None else np.zeros_like(node.value)
        for name, node in weights.items()
    }
    return terms, grads
