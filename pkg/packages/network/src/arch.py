"""
Detector Architecture

Ordered layer descriptors for the landmark regressor and their plain-text
serialization. Convolutions (3-wide kernels, zero padding 1) come first,
then fully connected layers on the flattened feature map; the final two
entries are always dense(K_learn·d) followed by tanh so that every learned
coordinate lies strictly inside (−1, 1).

Default channel counts are desk-scale choices of this project; published
descriptions of the architecture give only layer kinds, kernel size and
activations.
"""

import math
from typing import Literal, Sequence

from pydantic import BaseModel, Field, model_validator

from packages.autodiff.src.layers import conv_output_size

LayerKind = Literal["conv", "dense", "relu", "tanh"]


class ShapeMismatchError(ValueError):
    """An image, architecture or parameter set disagree on shape."""


class LayerSpec(BaseModel):
    """One layer.

    Attributes:
        kind: conv | dense | relu | tanh
        out: Output channels (conv) or units (dense)
        stride: Convolution stride, 1 or 2
    """

    kind: LayerKind
    out: int | None = Field(default=None, gt=0)
    stride: int = Field(default=1, ge=1, le=2)

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check_out(self) -> "LayerSpec":
        if self.kind in ("conv", "dense") and self.out is None:
            raise ValueError(f"{self.kind} layer needs an output size")
        if self.kind in ("relu", "tanh") and self.out is not None:
            raise ValueError(f"{self.kind} layer takes no output size")
        return self

    def to_text(self) -> str:
        if self.kind == "conv":
            return f"conv {self.out} {self.stride}"
        if self.kind == "dense":
            return f"dense {self.out}"
        return self.kind


class ArchSpec(BaseModel):
    """Input grid plus ordered layers.

    Attributes:
        input_dims: Image dims the detector accepts (2D or 3D)
        layers: Layer descriptors, convolutions before dense layers
    """

    input_dims: tuple[int, ...]
    layers: tuple[LayerSpec, ...]

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def _check_layout(self) -> "ArchSpec":
        if len(self.input_dims) not in (2, 3) or any(n < 1 for n in self.input_dims):
            raise ValueError(f"input dims must be 2D or 3D and positive, got {self.input_dims}")
        kinds = [layer.kind for layer in self.layers]
        if kinds[-2:] != ["dense", "tanh"]:
            raise ValueError("architecture must end with dense(K_learn·d) then tanh")
        seen_dense = False
        for layer in self.layers:
            if layer.kind == "dense":
                seen_dense = True
            elif layer.kind == "conv" and seen_dense:
                raise ValueError("conv layers must precede dense layers")
        if self.output_units % self.d:
            raise ValueError(f"output units {self.output_units} not a multiple of d = {self.d}")
        return self

    @property
    def d(self) -> int:
        return len(self.input_dims)

    @property
    def output_units(self) -> int:
        return self.layers[-2].out or 0

    @property
    def learned_landmarks(self) -> int:
        return self.output_units // self.d

    def parameter_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Ordered (name, shape) of every trainable tensor.

        Names are ``layer{i}.kernel`` / ``layer{i}.bias`` with i the index of
        the conv or dense entry in ``layers``.
        """
        shapes: list[tuple[str, tuple[int, ...]]] = []
        channels, spatial = 1, tuple(self.input_dims)
        features: int | None = None
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv":
                kernel = (layer.out, channels) + (3,) * self.d
                shapes.append((f"layer{i}.kernel", kernel))
                shapes.append((f"layer{i}.bias", (layer.out,)))
                channels = layer.out
                spatial = tuple(conv_output_size(n, layer.stride) for n in spatial)
            elif layer.kind == "dense":
                fan_in = features if features is not None else channels * math.prod(spatial)
                shapes.append((f"layer{i}.kernel", (layer.out, fan_in)))
                shapes.append((f"layer{i}.bias", (layer.out,)))
                features = layer.out
        return shapes

    def to_text(self) -> str:
        lines = ["input " + " ".join(str(n) for n in self.input_dims)]
        lines += [layer.to_text() for layer in self.layers]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ArchSpec":
        """Parse the layer list written by ``to_text``; blank lines are ignored."""
        input_dims: tuple[int, ...] | None = None
        layers: list[LayerSpec] = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            fields = raw.split()
            if not fields or fields[0] == "anchor":
                continue
            try:
                if fields[0] == "input":
                    input_dims = tuple(int(v) for v in fields[1:])
                elif fields[0] == "conv":
                    layers.append(LayerSpec(kind="conv", out=int(fields[1]), stride=int(fields[2])))
                elif fields[0] == "dense":
                    layers.append(LayerSpec(kind="dense", out=int(fields[1])))
                elif fields[0] in ("relu", "tanh") and len(fields) == 1:
                    layers.append(LayerSpec(kind=fields[0]))
                else:
                    raise ValueError(f"unknown layer {raw.strip()!r}")
            except (IndexError, ValueError) as e:
                raise ValueError(f"architecture line {lineno}: {e}") from e
        if input_dims is None:
            raise ValueError("architecture text has no 'input' line")
        return cls(input_dims=input_dims, layers=tuple(layers))


def default_arch(input_dims: Sequence[int], learned_landmarks: int) -> ArchSpec:
    """Four stride-2 conv blocks, one hidden dense layer, tanh output.

    2D: conv 8/16/32/64, dense 256. 3D: conv 4/8/16/32, dense 128.
    """
    input_dims = tuple(input_dims)
    d = len(input_dims)
    channels, hidden = ((8, 16, 32, 64), 256) if d == 2 else ((4, 8, 16, 32), 128)
    layers: list[LayerSpec] = []
    for c in channels:
        layers += [LayerSpec(kind="conv", out=c, stride=2), LayerSpec(kind="relu")]
    layers += [
        LayerSpec(kind="dense", out=hidden),
        LayerSpec(kind="relu"),
        LayerSpec(kind="dense", out=learned_landmarks * d),
        LayerSpec(kind="tanh"),
    ]
    return ArchSpec(input_dims=input_dims, layers=tuple(layers))
