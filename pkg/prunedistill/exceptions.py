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

__all__ = [
    "PruneDistillError",
    "ConfigurationError",
    "DependencyError",
    "TrainingDivergedError",
    "DimensionError",
    "BackwardError",
    "StructuralError",
    "PruningError",
    "CheckpointError",
    "CheckpointMalformedError",
]


class PruneDistillError(Exception):
    """
    The base class of all prunedistill exceptions.
    """

    pass


class ConfigurationError(PruneDistillError, ValueError):
    """
    Raised when a configuration value or a requested tap, task or layer
    does not exist or is inconsistent.
    """

    pass


class DependencyError(PruneDistillError):
    """
    Raised when a pipeline stage runs before the stage producing its inputs,
    or when the provenance chain between artifacts is broken.
    """

    pass


class TrainingDivergedError(PruneDistillError, ArithmeticError):
    """
    Raised when a loss becomes NaN or infinite.
    """

    pass


class DimensionError(PruneDistillError, ValueError):
    """
    Raised when the shape of a tensor does not match what a layer or
    an operation expects.
    """

    pass


class BackwardError(PruneDistillError, RuntimeError):
    """
    Raised when backpropagation is requested from a non-scalar tensor or
    from a tensor that is not part of a gradient tape.
    """

    pass


class StructuralError(PruneDistillError):
    """
    Raised when a pruning plan cannot be applied to a model graph.
    """

    pass


class PruningError(PruneDistillError, ValueError):
    """
    Raised when channel selection is requested with invalid arguments.
    """

    pass


class CheckpointError(PruneDistillError):
    """
    Raised when a checkpoint, a statistics file or a plan file cannot be
    read.
    """

    pass


class CheckpointMalformedError(CheckpointError):
    """
    Raised when an artifact is present but its content cannot be parsed.
    """

    pass
