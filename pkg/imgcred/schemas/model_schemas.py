from enum import Enum
from typing import Annotated, Any, Literal, Optional, Union

from pydantic import BaseModel, Field, model_validator


class FeatureLayer(str, Enum):
    C5_POOLED = "C5_pooled"
    FC6 = "FC6"
    FC7 = "FC7"


class ConvLayer(BaseModel):
    type: Literal["convolution"] = "convolution"
    out_channels: int = Field(ge=1)
    kernel: int = Field(ge=1)
    stride: int = Field(default=1, ge=1)
    padding: int = Field(default=0, ge=0)
    activation: Literal["relu", "none"] = "relu"


class MaxPoolLayer(BaseModel):
    type: Literal["max_pool"] = "max_pool"
    kernel: int = Field(ge=1)
    stride: int = Field(ge=1)


class ResponseNormLayer(BaseModel):
    # cross-channel normalisation: a / (k + alpha/size * sum a^2) ** beta, size = 2*radius+1
    type: Literal["response_norm"] = "response_norm"
    radius: int = Field(default=2, ge=0)
    alpha: float = 1e-4
    beta: float = 0.75
    k: float = 2.0


class FullyConnectedLayer(BaseModel):
    type: Literal["fully_connected"] = "fully_connected"
    out_dim: int = Field(ge=1)
    activation: Literal["relu", "softmax", "none"] = "relu"
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0)


LayerSpec = Annotated[
    Union[ConvLayer, MaxPoolLayer, ResponseNormLayer, FullyConnectedLayer],
    Field(discriminator="type"),
]


def _window_out(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


class ConvNetSpec(BaseModel):
    input_height: int = Field(ge=1)
    input_width: int = Field(ge=1)
    input_channels: int = Field(ge=1)
    layers: list[LayerSpec]

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.input_height, self.input_width, self.input_channels)

    def output_shapes(self) -> list[tuple[int, ...]]:
        """Per-layer output shapes: (C, H, W) for spatial layers, (D,) after a dense layer."""
        shape: tuple[int, ...] = (self.input_channels, self.input_height, self.input_width)
        shapes = []
        for index, layer in enumerate(self.layers):
            if isinstance(layer, FullyConnectedLayer):
                shape = (layer.out_dim,)
            elif len(shape) != 3:
                raise ValueError(f"layer {index} ({layer.type}) follows a dense layer")
            elif isinstance(layer, ConvLayer):
                c, h, w = shape
                shape = (
                    layer.out_channels,
                    _window_out(h, layer.kernel, layer.stride, layer.padding),
                    _window_out(w, layer.kernel, layer.stride, layer.padding),
                )
            elif isinstance(layer, MaxPoolLayer):
                c, h, w = shape
                shape = (
                    c,
                    _window_out(h, layer.kernel, layer.stride, 0),
                    _window_out(w, layer.kernel, layer.stride, 0),
                )
            if min(shape) < 1:
                raise ValueError(f"layer {index} ({layer.type}) produces empty output {shape}")
            shapes.append(shape)
        return shapes

    @model_validator(mode="after")
    def check_chain(self):
        if not self.layers:
            raise ValueError("network needs at least one layer")
        last = self.layers[-1]
        if not (isinstance(last, FullyConnectedLayer) and last.out_dim == 2 and last.activation == "softmax"):
            raise ValueError("final layer must be fully_connected with out_dim=2 and softmax")
        for layer in self.layers[:-1]:
            if isinstance(layer, FullyConnectedLayer) and layer.activation == "softmax":
                raise ValueError("softmax is only allowed on the final layer")
        self.output_shapes()
        return self


class ModelDocument(BaseModel):
    format_version: Literal[1] = 1
    kind: Literal["convnet", "logreg"]
    spec: Optional[ConvNetSpec] = None
    rng_seed: Optional[int] = None
    parameters: Any

    @model_validator(mode="after")
    def check_kind(self):
        if self.kind == "convnet" and self.spec is None:
            raise ValueError("convnet document needs a spec")
        return self
