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

from typing import Tuple
import enum

__all__ = [
    "Task",
    "LayerKind",
    "TASKS",
    "CHECKPOINT_MAGIC",
    "CHECKPOINT_FORMAT_VERSION",
    "HALF_PRECISION_MAX",
]


class Task(enum.Enum):
    DET = "det"
    DA = "da"
    LANE = "lane"


class LayerKind(enum.Enum):
    CONV2D = "conv2d"
    RELU = "relu"
    MAXPOOL2X2 = "maxpool2x2"
    BILINEAR_UPSAMPLE = "bilinear_upsample"
    LINEAR = "linear"
    GLOBAL_AVG_POOL = "global_avg_pool"

    @property
    def parametric(self) -> bool:
        return self in (LayerKind.CONV2D, LayerKind.LINEAR)


# Fixed task order; every per-task loop and record follows it.
TASKS: Tuple[Task, ...] = (Task.DET, Task.DA, Task.LANE)

CHECKPOINT_MAGIC = b"MTPD"
CHECKPOINT_FORMAT_VERSION = 1

HALF_PRECISION_MAX = 65504.0
