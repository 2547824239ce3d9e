#!/usr/bin/env python3
# -*- coding: utf-8 -*-
#
#   Copyright 2026 Kaede Hoshikawa
#
#   Licensed under the Apache License, Version 2.0 (the "License");
#   you may not use this file except in compliance with the License.
#   You may obtain a copy of the License at
#
#       http://www.apache.org/licenses/LICENSE-2.0
#
#   Unless required by applicable law or agreed to in writing, software
#   distributed under the License is distributed on an "AS IS" BASIS,
#   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
#   See the License for the specific language governing permissions and
#   limitations under the License.

from typing import Any, Dict, Optional
import dataclasses

import numpy as np

from . import tensors
from .constants import LayerKind
from .exceptions import ConfigurationError, DimensionError
from .tensors import Tensor

__all__ = [
    "LayerSpec",
    "LayerParameters",
    "init_layer_parameters",
    "forward",
]


@dataclasses.dataclass(frozen=True)
class LayerSpec:
    """
    One node of a model graph.

    ``source`` names the layer feeding this one; ``None`` means the network
    input. For ``bilinear_upsample`` the ``stride`` is the integer scale.
    """

    id: str  # noqa: A003
    kind: LayerKind
    in_channels: int
    out_channels: int
    source: Optional[str] = None
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    prunable: bool = False

    def __post_init__(self) -> None:
        if self.prunable and self.kind != LayerKind.CONV2D:
            raise ConfigurationError(
                f"Layer {self.id!r}: only conv2d layers can be prunable."
            )

        if not self.kind.parametric and self.in_channels != self.out_channels:
            raise ConfigurationError(
                f"Layer {self.id!r}: {self.kind.value} layers preserve "
                "the channel count."
            )

        if min(self.in_channels, self.out_channels, self.kernel) < 1:
            raise ConfigurationError(
                f"Layer {self.id!r}: channel counts and kernel must be "
                "positive."
            )

    @property
    def weight_shape(self) -> tuple:  # type: ignore
        if self.kind == LayerKind.CONV2D:
            return (
                self.out_channels,
                self.in_channels,
                self.kernel,
                self.kernel,
            )

        if self.kind == LayerKind.LINEAR:
            return (self.out_channels, self.in_channels)

        raise AttributeError(f"{self.kind.value} layers have no weight.")

    @property
    def parameter_count(self) -> int:
        if not self.kind.parametric:
            return 0

        k = self.kernel if self.kind == LayerKind.CONV2D else 1

        return self.out_channels * self.in_channels * k * k + self.out_channels

    def to_dict(self) -> Dict[str, Any]:
        record = dataclasses.asdict(self)
        record["kind"] = self.kind.value

        return record

    @classmethod
    def from_dict(cls, record: Dict[str, Any]) -> "LayerSpec":
        return cls(**{**record, "kind": LayerKind(record["kind"])})


class LayerParameters:
    """
    Weight and bias of a parametric layer.
    """

    __slots__ = ("_weight", "_bias")

    def __init__(self, weight: Tensor, bias: Tensor) -> None:
        self._weight = weight
        self._bias = bias

    @property
    def weight(self) -> Tensor:
        return self._weight

    @property
    def bias(self) -> Tensor:
        return self._bias

    def __iter__(self):  # type: ignore
        yield "weight", self._weight
        yield "bias", self._bias

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"{self.__class__.__name__}(weight={self._weight!r}, "
            f"bias={self._bias!r})"
        )


def init_layer_parameters(
    spec: LayerSpec, rng: np.random.Generator, dtype: Any = np.float32
) -> LayerParameters:
    # He-normal weights, zero bias.
    fan_in = int(np.prod(spec.weight_shape[1:]))
    weight = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=spec.weight_shape)

    return LayerParameters(
        Tensor(weight, dtype=dtype, requires_grad=True),
        Tensor(np.zeros(spec.out_channels), dtype=dtype, requires_grad=True),
    )


def forward(
    layer: LayerSpec, x: Tensor, params: Optional[LayerParameters] = None
) -> Tensor:
    if x.ndim < 2 or x.shape[1] != layer.in_channels:
        raise DimensionError(
            f"Layer {layer.id!r} expects {layer.in_channels} input channels, "
            f"got input of shape {x.shape}."
        )

    if layer.kind.parametric and params is None:
        raise DimensionError(f"Layer {layer.id!r} has no parameters.")

    try:
        return _dispatch(layer, x, params)

    except DimensionError as e:
        raise DimensionError(f"Layer {layer.id!r}: {e}") from e


def _dispatch(
    layer: LayerSpec, x: Tensor, params: Optional[LayerParameters]
) -> Tensor:
    if layer.kind == LayerKind.CONV2D:
        assert params is not None

        return tensors.conv2d(
            x,
            params.weight,
            params.bias,
            stride=layer.stride,
            padding=layer.padding,
        )

    if layer.kind == LayerKind.LINEAR:
        assert params is not None

        return tensors.linear(x, params.weight, params.bias)

    if layer.kind == LayerKind.RELU:
        return tensors.relu(x)

    if layer.kind == LayerKind.MAXPOOL2X2:
        return tensors.max_pool2x2(x)

    if layer.kind == LayerKind.GLOBAL_AVG_POOL:
        return tensors.global_avg_pool(x)

    if layer.kind == LayerKind.BILINEAR_UPSAMPLE:
        if x.ndim != 4:
            raise DimensionError(
                "bilinear_upsample expects a 4-dimensional input, "
                f"got shape {x.shape}."
            )

        return tensors.resize_bilinear(
            x, (x.shape[2] * layer.stride, x.shape[3] * layer.stride)
        )

    raise ConfigurationError(  # pragma: no cover
        f"Unknown layer kind {layer.kind!r}."
    )
