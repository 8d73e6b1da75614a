"""
Landmark Detector

Convolutional regressor mapping an image to K landmark coordinates, applied
as a Siamese pair: one parameter set, two independent forward passes for the
source and the target image. The network emits K_learn = K − |anchors|
points through a tanh layer; fixed anchors (e.g. image corners) are appended
after the learned rows and never receive gradients.

Initialization: weights uniform in ±√(6/fan_in) for layers feeding a relu,
±√(3/fan_in) for the output layer, biases zero. fan_in counts every input
element of one output unit (C_in·3^d for a conv, input width for a dense).

References:
- Bromley et al. (1993). "Signature Verification using a Siamese Time Delay
  Neural Network"
- He et al. (2015). "Delving Deep into Rectifiers"
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from packages.autodiff.src.layers import (
    diff_concat_rows,
    diff_conv,
    diff_dense,
    diff_relu,
    diff_reshape,
    diff_tanh,
)
from packages.autodiff.src.node import Node, constant
from packages.network.src.arch import ArchSpec, ShapeMismatchError
from packages.registration.src.landmarks import LandmarkSet
from packages.tensor.src.image import ImageTensor, downsample_to, whiten
from packages.tensor.src.rng import make_rng

INIT_STREAM = 3


def corner_anchors(d: int) -> np.ndarray:
    """The 2^d corners of [−1, 1]^d, first axis slowest."""
    return np.array(list(itertools.product((-1.0, 1.0), repeat=d)))


@dataclass(frozen=True)
class NetParams:
    """One immutable version of the detector parameters.

    Attributes:
        arch: Layer layout and input dims
        weights: ``layer{i}.kernel`` / ``layer{i}.bias`` arrays, in layer order
        anchors: Fixed landmarks (A × d) appended after the learned rows
    """

    arch: ArchSpec
    weights: dict[str, np.ndarray]
    anchors: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self) -> None:
        expected = self.arch.parameter_shapes()
        if [name for name, _ in expected] != list(self.weights):
            raise ShapeMismatchError(
                f"parameter names {list(self.weights)} do not match the architecture"
            )
        frozen: dict[str, np.ndarray] = {}
        for name, shape in expected:
            array = np.array(self.weights[name], dtype=np.float64)
            if array.shape != shape:
                raise ShapeMismatchError(f"{name}: expected {shape}, got {array.shape}")
            array.setflags(write=False)
            frozen[name] = array
        anchors = np.array(self.anchors, dtype=np.float64).reshape(-1, self.arch.d)
        anchors.setflags(write=False)
        object.__setattr__(self, "weights", frozen)
        object.__setattr__(self, "anchors", anchors)

    @property
    def d(self) -> int:
        return self.arch.d

    @property
    def learned(self) -> int:
        return self.arch.learned_landmarks

    @property
    def K(self) -> int:
        return self.learned + self.anchors.shape[0]

    def replace_weights(self, weights: dict[str, np.ndarray]) -> "NetParams":
        """A new parameter version with the same architecture and anchors."""
        return NetParams(arch=self.arch, weights=weights, anchors=self.anchors)

    def count(self) -> int:
        return sum(w.size for w in self.weights.values())


def _fan_in(shape: tuple[int, ...]) -> int:
    return math.prod(shape[1:])


def init_params(arch: ArchSpec, seed: int, anchors: np.ndarray | None = None) -> NetParams:
    """Fan-in scaled uniform initialization, deterministic per seed."""
    weights: dict[str, np.ndarray] = {}
    shapes = arch.parameter_shapes()
    last_kernel = [name for name, _ in shapes if name.endswith(".kernel")][-1]
    for index, (name, shape) in enumerate(shapes):
        if name.endswith(".bias"):
            weights[name] = np.zeros(shape)
            continue
        gain = 3.0 if name == last_kernel else 6.0
        bound = math.sqrt(gain / _fan_in(shape))
        weights[name] = make_rng(seed, INIT_STREAM, index).uniform(-bound, bound, size=shape)
    if anchors is None:
        anchors = np.zeros((0, arch.d))
    return NetParams(arch=arch, weights=weights, anchors=anchors)


def zero_params(arch: ArchSpec, anchors: np.ndarray | None = None) -> NetParams:
    weights = {name: np.zeros(shape) for name, shape in arch.parameter_shapes()}
    if anchors is None:
        anchors = np.zeros((0, arch.d))
    return NetParams(arch=arch, weights=weights, anchors=anchors)


def _check_image(params: NetParams, img: ImageTensor) -> None:
    if img.dims != params.arch.input_dims:
        raise ShapeMismatchError(
            f"detector expects {params.arch.input_dims} images, got {img.dims}"
        )


def forward(params: NetParams, img: ImageTensor, weights: dict[str, Node]) -> Node:
    """Graph of the learned landmarks plus anchors (K × d).

    Args:
        params: Architecture and anchors (weight values are taken from ``weights``)
        img: Input image matching ``params.arch.input_dims``
        weights: One node per parameter; leaves when training, constants otherwise
    """
    _check_image(params, img)
    x = constant(img.as_array()[None, ...])
    for i, layer in enumerate(params.arch.layers):
        if layer.kind == "conv":
            x = diff_conv(x, weights[f"layer{i}.kernel"], weights[f"layer{i}.bias"], layer.stride)
        elif layer.kind == "dense":
            if x.value.ndim != 1:
                x = diff_reshape(x, (x.value.size,))
            x = diff_dense(x, weights[f"layer{i}.kernel"], weights[f"layer{i}.bias"])
        elif layer.kind == "relu":
            x = diff_relu(x)
        else:
            x = diff_tanh(x)
    learned = diff_reshape(x, (params.learned, params.d))
    if params.anchors.shape[0] == 0:
        return learned
    return diff_concat_rows(learned, constant(params.anchors))


def constant_weights(params: NetParams) -> dict[str, Node]:
    return {name: constant(value) for name, value in params.weights.items()}


def detect(params: NetParams, img: ImageTensor) -> LandmarkSet:
    """Forward pass only: K × d landmarks, anchors last."""
    return LandmarkSet(forward(params, img, constant_weights(params)).value)


def detect_pair(
    params: NetParams, I_S: ImageTensor, I_T: ImageTensor
) -> tuple[LandmarkSet, LandmarkSet]:
    """Siamese application: the same parameters on source and target."""
    return detect(params, I_S), detect(params, I_T)


def prepare_input(params: NetParams, img: ImageTensor) -> ImageTensor:
    """Raw image to detector input: halved down to the input dims, then whitened."""
    return whiten(downsample_to(img, params.arch.input_dims))
