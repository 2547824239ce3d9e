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

from . import (
    _version,
    checkpoints,
    config,
    conflicts,
    constants,
    datasets,
    distillers,
    evaluation,
    exceptions,
    importance,
    layers,
    losses,
    models,
    pipeline,
    pruners,
    tensors,
    trainers,
)
from ._version import *  # noqa: F401, F403
from .checkpoints import *  # noqa: F401, F403
from .config import *  # noqa: F401, F403
from .conflicts import *  # noqa: F401, F403
from .constants import *  # noqa: F401, F403
from .datasets import *  # noqa: F401, F403
from .distillers import *  # noqa: F401, F403
from .evaluation import *  # noqa: F401, F403
from .exceptions import *  # noqa: F401, F403
from .importance import *  # noqa: F401, F403
from .layers import *  # noqa: F401, F403
from .losses import *  # noqa: F401, F403
from .models import *  # noqa: F401, F403
from .pipeline import *  # noqa: F401, F403
from .pruners import *  # noqa: F401, F403
from .tensors import *  # noqa: F401, F403
from .trainers import *  # noqa: F401, F403

__all__ = (
    _version.__all__
    + checkpoints.__all__
    + config.__all__
    + conflicts.__all__
    + constants.__all__
    + datasets.__all__
    + distillers.__all__
    + evaluation.__all__
    + exceptions.__all__
    + importance.__all__
    + layers.__all__
    + losses.__all__
    + models.__all__
    + pipeline.__all__
    + pruners.__all__
    + tensors.__all__
    + trainers.__all__
)
