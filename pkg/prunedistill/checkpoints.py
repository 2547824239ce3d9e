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

from typing import Any, Dict, Mapping, Optional, Union
import hashlib
import os

import numpy as np

from .codecs import compose_checkpoint, parse_checkpoint
from .exceptions import (
    CheckpointError,
    CheckpointMalformedError,
    ConfigurationError,
    DependencyError,
    DimensionError,
)
from .layers import LayerParameters
from .models import Model, ModelGraph
from .tensors import Tensor

__all__ = [
    "Checkpoint",
    "file_sha256",
    "save_checkpoint",
    "load_checkpoint",
]

_PathLike = Union[str, "os.PathLike[str]"]


class Checkpoint:
    """
    A model (graph and parameters) plus free-form JSON metadata, such as the
    producing stage, seed, plan hash and teacher hash.
    """

    __slots__ = ("_model", "_metadata")

    def __init__(
        self, model: Model, metadata: Optional[Mapping[str, Any]] = None
    ) -> None:
        self._model = model
        self._metadata = dict(metadata or {})

    @property
    def model(self) -> Model:
        return self._model

    @property
    def metadata(self) -> Dict[str, Any]:
        return self._metadata

    def to_bytes(self) -> bytes:
        return compose_checkpoint(
            graph=self._model.graph.to_dict(),
            metadata=self._metadata,
            tensors=[
                (name, tensor.data)
                for name, tensor in self._model.named_parameters()
            ],
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Checkpoint":
        parsed = parse_checkpoint(buf)

        try:
            graph = ModelGraph.from_dict(parsed.graph)

        except ConfigurationError as e:
            raise CheckpointMalformedError(str(e)) from e

        arrays = dict(parsed.tensors)
        params = {}

        for spec in graph.parametric_layers:
            try:
                weight = arrays.pop(f"{spec.id}.weight")
                bias = arrays.pop(f"{spec.id}.bias")

            except KeyError as e:
                raise CheckpointMalformedError(
                    f"Missing tensor {e.args[0]!r}."
                ) from e

            params[spec.id] = LayerParameters(
                Tensor(weight, dtype=np.float32, requires_grad=True),
                Tensor(bias, dtype=np.float32, requires_grad=True),
            )

        if arrays:
            raise CheckpointMalformedError(
                f"Unexpected tensors {sorted(arrays)}."
            )

        try:
            model = Model(graph, params)

        except (ConfigurationError, DimensionError) as e:
            raise CheckpointMalformedError(str(e)) from e

        return cls(model, parsed.metadata)

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"{self.__class__.__name__}(model={self._model!r}, "
            f"metadata={sorted(self._metadata)!r})"
        )


def file_sha256(path: _PathLike) -> str:
    try:
        with open(path, "rb") as f:
            return hashlib.sha256(f.read()).hexdigest()

    except FileNotFoundError as e:
        raise DependencyError(f"{os.fspath(path)} does not exist.") from e


def save_checkpoint(
    path: _PathLike,
    model: Model,
    metadata: Optional[Mapping[str, Any]] = None,
) -> str:
    """
    Write the checkpoint and return the sha256 of the written bytes.
    """
    buf = Checkpoint(model, metadata).to_bytes()

    try:
        os.makedirs(os.path.dirname(os.fspath(path)) or ".", exist_ok=True)

        with open(path, "wb") as f:
            f.write(buf)

    except OSError as e:
        raise CheckpointError(f"Unable to write {os.fspath(path)}.") from e

    return hashlib.sha256(buf).hexdigest()


def load_checkpoint(path: _PathLike) -> Checkpoint:
    try:
        with open(path, "rb") as f:
            buf = f.read()

    except FileNotFoundError as e:
        raise DependencyError(
            f"Checkpoint {os.fspath(path)} does not exist; run the stage "
            "producing it first."
        ) from e

    return Checkpoint.from_bytes(buf)
