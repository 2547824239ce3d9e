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

from typing import (
    Any,
    Dict,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
    Union,
)
import hashlib

import magicdict
import numpy as np

from . import config, layers
from .constants import TASKS, LayerKind, Task
from .exceptions import ConfigurationError, DimensionError
from .layers import LayerParameters, LayerSpec
from .tensors import Tensor

__all__ = [
    "ModelGraph",
    "Model",
    "build_reference_graph",
    "init_model",
    "parameter_count",
    "forward_with_taps",
]

Features = "magicdict.FrozenMagicDict[str, Tensor]"
Predictions = "magicdict.FrozenMagicDict[Task, Tensor]"


class ModelGraph:
    """
    A layered multi-task network description.

    Layers are stored in execution order; every layer reads the output of
    its ``source`` (or the input images), so the topology is a tree rooted
    at the input and therefore acyclic.
    """

    __slots__ = ("_layers", "_index", "_heads", "_tap_points")

    def __init__(
        self,
        layers: Sequence[LayerSpec],
        *,
        heads: Mapping[Task, str],
        tap_points: Sequence[str] = (),
    ) -> None:
        self._layers = tuple(layers)
        self._index: Dict[str, int] = {}

        for i, spec in enumerate(self._layers):
            if spec.id in self._index:
                raise ConfigurationError(f"Duplicate layer id {spec.id!r}.")

            if spec.source is not None and spec.source not in self._index:
                raise ConfigurationError(
                    f"Layer {spec.id!r} reads {spec.source!r}, which is not "
                    "an earlier layer."
                )

            self._index[spec.id] = i

        self._heads = magicdict.FrozenMagicDict(
            [(Task(task), layer_id) for task, layer_id in heads.items()]
        )
        self._tap_points = tuple(tap_points)

        for layer_id in [*self._heads.values(), *self._tap_points]:
            if layer_id not in self._index:
                raise ConfigurationError(f"Unknown layer id {layer_id!r}.")

        shared = self.shared_layers()

        for spec in self._layers:
            if spec.prunable and spec.id not in shared:
                raise ConfigurationError(
                    f"Layer {spec.id!r} is prunable but not shared by "
                    "every task head."
                )

    @property
    def layers(self) -> Tuple[LayerSpec, ...]:
        return self._layers

    @property
    def heads(self) -> "magicdict.FrozenMagicDict[Task, str]":
        return self._heads

    @property
    def tap_points(self) -> Tuple[str, ...]:
        return self._tap_points

    @property
    def edges(self) -> List[Tuple[str, str]]:
        return [
            (spec.source, spec.id)
            for spec in self._layers
            if spec.source is not None
        ]

    def __contains__(self, layer_id: object) -> bool:
        return layer_id in self._index

    def layer(self, layer_id: str) -> LayerSpec:
        try:
            return self._layers[self._index[layer_id]]

        except KeyError as e:
            raise ConfigurationError(f"Unknown layer id {layer_id!r}.") from e

    def consumers(self, layer_id: str) -> List[LayerSpec]:
        return [spec for spec in self._layers if spec.source == layer_id]

    def ancestors(self, layer_id: str) -> List[str]:
        chain = []
        source = self.layer(layer_id).source

        while source is not None:
            chain.append(source)
            source = self.layer(source).source

        return chain

    def shared_layers(self) -> Set[str]:
        """
        Layers every task head depends on.
        """
        if not self._heads:
            return set()

        sets = [
            {head, *self.ancestors(head)} for head in self._heads.values()
        ]

        return set.intersection(*sets)

    def producer_of(self, layer_id: str) -> Optional[LayerSpec]:
        """
        The nearest parametric layer at or above ``layer_id``, i.e. the layer
        deciding how many channels ``layer_id`` outputs.
        """
        current: Optional[str] = layer_id

        while current is not None:
            spec = self.layer(current)

            if spec.kind.parametric:
                return spec

            current = spec.source

        return None

    @property
    def prunable_layers(self) -> List[LayerSpec]:
        return [spec for spec in self._layers if spec.prunable]

    @property
    def parametric_layers(self) -> List[LayerSpec]:
        return [spec for spec in self._layers if spec.kind.parametric]

    def replace(self, specs: Mapping[str, LayerSpec]) -> "ModelGraph":
        return ModelGraph(
            [specs.get(spec.id, spec) for spec in self._layers],
            heads=self._heads,
            tap_points=self._tap_points,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layers": [spec.to_dict() for spec in self._layers],
            "heads": {task.value: lid for task, lid in self._heads.items()},
            "tap_points": list(self._tap_points),
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "ModelGraph":
        try:
            return cls(
                [LayerSpec.from_dict(item) for item in record["layers"]],
                heads={
                    Task(task): lid for task, lid in record["heads"].items()
                },
                tap_points=record.get("tap_points", ()),
            )

        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Malformed model graph: {e}") from e

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ModelGraph):
            return NotImplemented

        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:  # pragma: no cover
        return hash(self._layers)

    def __repr__(self) -> str:  # pragma: no cover
        parts = [
            ("layers", str(len(self._layers))),
            ("heads", repr(dict(self._heads))),
            ("tap_points", repr(self._tap_points)),
        ]

        args_repr = ", ".join([f"{k}={v}" for k, v in parts])

        return f"{self.__class__.__name__}({args_repr})"


def parameter_count(graph: ModelGraph) -> int:
    """
    Analytic parameter count: sum of out * in * k^2 + out over parametric
    layers (k = 1 for linear layers).
    """
    return sum(spec.parameter_count for spec in graph.layers)


def build_reference_graph(
    model_config: Optional[config.ModelConfig] = None,
) -> ModelGraph:
    cfg = model_config or config.ModelConfig()

    specs: List[LayerSpec] = []
    source: Optional[str] = None
    channels = 3

    for stage, out_channels in enumerate(cfg.backbone_channels, start=1):
        conv_id = f"backbone.conv{stage}"
        specs.append(
            LayerSpec(
                conv_id,
                LayerKind.CONV2D,
                channels,
                out_channels,
                source=source,
                kernel=3,
                stride=2,
                padding=1,
                prunable=True,
            )
        )
        specs.append(
            LayerSpec(
                f"backbone.relu{stage}",
                LayerKind.RELU,
                out_channels,
                out_channels,
                source=conv_id,
            )
        )
        source, channels = f"backbone.relu{stage}", out_channels

    specs.append(
        LayerSpec(
            "encoder.conv",
            LayerKind.CONV2D,
            channels,
            cfg.encoder_channels,
            source=source,
            kernel=3,
            padding=1,
        )
    )
    specs.append(
        LayerSpec(
            "encoder.relu",
            LayerKind.RELU,
            cfg.encoder_channels,
            cfg.encoder_channels,
            source="encoder.conv",
        )
    )

    enc = cfg.encoder_channels
    specs.append(
        LayerSpec(
            "det.pool", LayerKind.GLOBAL_AVG_POOL, enc, enc, "encoder.relu"
        )
    )
    specs.append(
        LayerSpec(
            "det.fc", LayerKind.LINEAR, enc, 4 + cfg.num_classes, "det.pool"
        )
    )

    hidden = cfg.head_channels

    for task in (Task.DA, Task.LANE):
        name = task.value
        specs.append(
            LayerSpec(
                f"{name}.conv",
                LayerKind.CONV2D,
                enc,
                hidden,
                source="encoder.relu",
                kernel=3,
                padding=1,
            )
        )
        specs.append(
            LayerSpec(
                f"{name}.relu",
                LayerKind.RELU,
                hidden,
                hidden,
                source=f"{name}.conv",
            )
        )
        upstream = f"{name}.relu"

        for step in range(1, len(cfg.backbone_channels) + 1):
            specs.append(
                LayerSpec(
                    f"{name}.up{step}",
                    LayerKind.BILINEAR_UPSAMPLE,
                    hidden,
                    hidden,
                    source=upstream,
                    stride=2,
                )
            )
            upstream = f"{name}.up{step}"

        specs.append(
            LayerSpec(
                f"{name}.out", LayerKind.CONV2D, hidden, 1, source=upstream
            )
        )

    return ModelGraph(
        specs,
        heads={Task.DET: "det.fc", Task.DA: "da.out", Task.LANE: "lane.out"},
        tap_points=(
            *[spec.id for spec in specs if spec.id.startswith("backbone.")],
            "encoder.conv",
            "encoder.relu",
        ),
    )


class Model:
    """
    A model graph together with the parameters of its parametric layers.
    """

    __slots__ = ("_graph", "_params")

    def __init__(
        self, graph: ModelGraph, params: Mapping[str, LayerParameters]
    ) -> None:
        expected = {spec.id for spec in graph.parametric_layers}

        if set(params.keys()) != expected:
            raise ConfigurationError(
                "Parameters must map one-to-one onto parametric layers; "
                f"missing {sorted(expected - set(params))}, "
                f"unexpected {sorted(set(params) - expected)}."
            )

        for spec in graph.parametric_layers:
            layer_params = params[spec.id]

            if layer_params.weight.shape != spec.weight_shape or (
                layer_params.bias.shape != (spec.out_channels,)
            ):
                raise DimensionError(
                    f"Layer {spec.id!r}: parameters do not match "
                    f"{spec.weight_shape}."
                )

        self._graph = graph
        self._params = dict(params)

    @property
    def graph(self) -> ModelGraph:
        return self._graph

    def layer_parameters(self, layer_id: str) -> LayerParameters:
        return self._params[layer_id]

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for spec in self._graph.parametric_layers:
            for name, tensor in self._params[spec.id]:
                yield f"{spec.id}.{name}", tensor

    def parameters(self) -> List[Tensor]:
        return [tensor for _, tensor in self.named_parameters()]

    def num_parameters(self) -> int:
        return sum(tensor.size for tensor in self.parameters())

    def checksum(self) -> str:
        digest = hashlib.sha256()

        for name, tensor in self.named_parameters():
            digest.update(name.encode("utf-8"))
            digest.update(np.ascontiguousarray(tensor.data).tobytes())

        return digest.hexdigest()

    def freeze(self) -> "Model":
        for tensor in self.parameters():
            tensor.requires_grad = False
            tensor.zero_grad()

        return self

    @property
    def frozen(self) -> bool:
        return not any(tensor.requires_grad for tensor in self.parameters())

    def zero_grad(self) -> None:
        for tensor in self.parameters():
            tensor.zero_grad()

    def clone(
        self, *, dtype: Any = None, requires_grad: bool = True
    ) -> "Model":
        params = {}

        for layer_id, layer_params in self._params.items():
            params[layer_id] = LayerParameters(
                *[
                    Tensor(
                        tensor.data,
                        dtype=tensor.dtype if dtype is None else dtype,
                        requires_grad=requires_grad,
                    )
                    for _, tensor in layer_params
                ]
            )

        return Model(self._graph, params)

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"{self.__class__.__name__}(graph={self._graph!r}, "
            f"parameters={self.num_parameters()})"
        )


def init_model(
    graph: ModelGraph, seed: int, *, dtype: Any = np.float32
) -> Model:
    rng = np.random.default_rng(seed)

    return Model(
        graph,
        {
            spec.id: layers.init_layer_parameters(spec, rng, dtype)
            for spec in graph.parametric_layers
        },
    )


def forward_with_taps(
    model: Model,
    images: Union[Tensor, np.ndarray],
    taps: Iterable[str] = (),
) -> Tuple[Predictions, Features]:
    """
    Run the whole graph once; return the head outputs and the outputs of the
    requested layers, each of which must be a tap point of the graph.
    """
    graph = model.graph
    tap_ids = list(taps)

    for tap in tap_ids:
        if tap not in graph.tap_points:
            raise ConfigurationError(
                f"{tap!r} is not a tap point of the model graph."
            )

    x = images if isinstance(images, Tensor) else Tensor(images)

    if x.ndim != 4:
        raise DimensionError(
            f"Images must be shaped [B, C, H, W], got {x.shape}."
        )

    outputs: Dict[str, Tensor] = {}

    for spec in graph.layers:
        inp = x if spec.source is None else outputs[spec.source]
        outputs[spec.id] = layers.forward(
            spec, inp, model._params.get(spec.id)
        )

    predictions = magicdict.FrozenMagicDict(
        [(task, outputs[graph.heads[task]]) for task in TASKS]
    )
    features = magicdict.FrozenMagicDict(
        [(tap, outputs[tap]) for tap in tap_ids]
    )

    return predictions, features
