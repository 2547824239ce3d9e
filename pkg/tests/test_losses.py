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

from test_helper import TestHelper
import numpy as np
import pytest

from prunedistill import (
    ConfigurationError,
    Task,
    Tensor,
    TrainingDivergedError,
    box_regression_loss,
    check_finite,
    classification_loss,
    collate,
    segmentation_loss,
    sum_losses,
    task_losses,
)

helper = TestHelper()


class TaskLossTestCase:
    def test_box_loss_uses_first_four_outputs(self):
        outputs = Tensor(np.array([[1.0, 1.0, 1.0, 1.0, 9.0, -9.0]]))
        boxes = np.zeros((1, 4))

        assert box_regression_loss(outputs, boxes).item() == 1.0

    def test_classification_loss_uses_logits(self):
        outputs = Tensor(np.array([[0.0, 0.0, 0.0, 0.0, 0.0, 0.0]]))

        assert classification_loss(outputs, np.array([1])).item() == (
            pytest.approx(np.log(2.0))
        )

    def test_segmentation_loss(self):
        logits = Tensor(np.zeros((1, 1, 2, 2)))

        assert segmentation_loss(logits, np.ones((1, 1, 2, 2))).item() == (
            pytest.approx(np.log(2.0))
        )

    def test_task_losses(self):
        batch = collate(helper.tiny_samples(4))
        losses = task_losses(helper.tiny_model(), batch)

        assert list(losses) == [Task.DET, Task.DA, Task.LANE]
        assert all(loss.item() > 0 for loss in losses.values())

    def test_empty_batch(self):
        batch = collate(helper.tiny_samples(1))
        empty = type(batch)(
            batch.images[:0],
            batch.boxes[:0],
            batch.labels[:0],
            batch.da_masks[:0],
            batch.lane_masks[:0],
        )

        with pytest.raises(ConfigurationError):
            task_losses(helper.tiny_model(), empty)

    def test_sum_losses(self):
        losses = {
            Task.LANE: Tensor(3.0),
            Task.DET: Tensor(1.0),
            Task.DA: Tensor(2.0),
        }

        assert sum_losses(losses).item() == 6.0

        with pytest.raises(ConfigurationError):
            sum_losses({})

    def test_check_finite(self):
        loss = Tensor(1.0)

        assert check_finite("det", loss) is loss

        with pytest.raises(TrainingDivergedError, match="det"):
            check_finite("det", Tensor(float("nan")))
