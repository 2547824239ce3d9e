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

from typing import Mapping
import typing

import magicdict
import numpy as np

from . import tensors
from .constants import TASKS, Task
from .exceptions import ConfigurationError, TrainingDivergedError
from .models import Model, forward_with_taps
from .tensors import Tensor

if typing.TYPE_CHECKING:  # pragma: no cover
    from .datasets import Batch  # noqa: F401

__all__ = [
    "check_finite",
    "box_regression_loss",
    "classification_loss",
    "segmentation_loss",
    "losses_from_predictions",
    "task_losses",
    "sum_losses",
]

TaskLosses = "magicdict.FrozenMagicDict[Task, Tensor]"


def check_finite(name: str, loss: Tensor) -> Tensor:
    if not np.all(np.isfinite(loss.data)):
        raise TrainingDivergedError(f"The {name} loss is not finite.")

    return loss


def box_regression_loss(outputs: Tensor, boxes: np.ndarray) -> Tensor:
    return tensors.mse_loss(outputs[:, :4], boxes)


def classification_loss(outputs: Tensor, labels: np.ndarray) -> Tensor:
    return tensors.cross_entropy(outputs[:, 4:], labels)


def segmentation_loss(logits: Tensor, masks: np.ndarray) -> Tensor:
    return tensors.binary_cross_entropy(tensors.sigmoid(logits), masks)


def losses_from_predictions(
    predictions: Mapping[Task, Tensor], batch: "Batch"
) -> TaskLosses:
    det = predictions[Task.DET]

    losses = [
        (
            Task.DET,
            box_regression_loss(det, batch.boxes)
            + classification_loss(det, batch.labels),
        ),
        (Task.DA, segmentation_loss(predictions[Task.DA], batch.da_masks)),
        (
            Task.LANE,
            segmentation_loss(predictions[Task.LANE], batch.lane_masks),
        ),
    ]

    return magicdict.FrozenMagicDict(
        [(task, check_finite(task.value, loss)) for task, loss in losses]
    )


def task_losses(model: Model, batch: "Batch") -> TaskLosses:
    if len(batch) == 0:
        raise ConfigurationError("task_losses needs a non-empty batch.")

    predictions, _ = forward_with_taps(model, batch.images)

    return losses_from_predictions(predictions, batch)


def sum_losses(losses: Mapping[Task, Tensor]) -> Tensor:
    """
    Sum of the task losses, always added in :data:`TASKS` order.
    """
    present = [losses[task] for task in TASKS if task in losses]

    if not present:
        raise ConfigurationError("No task losses to sum.")

    total = present[0]

    for loss in present[1:]:
        total = total + loss

    return total
