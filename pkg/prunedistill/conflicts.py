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

from typing import Any, Dict, Iterable, List, Mapping, Tuple, Union
import itertools

import magicdict
import numpy as np

from .constants import Task
from .exceptions import ConfigurationError, DimensionError

__all__ = [
    "similarity",
    "pairwise_similarities",
    "penalty_from_similarities",
    "conflict_penalty",
    "ConflictReport",
    "conflict_report",
]

TaskPair = Tuple[Task, Task]
PairArrays = "magicdict.FrozenMagicDict[TaskPair, np.ndarray]"
_Real = Union[float, np.ndarray]


def similarity(g_t: _Real, g_t2: _Real, eps: float) -> _Real:
    """
    Stabilised sign agreement ``g * g' / (|g| * |g'| + eps)``.

    Works element-wise on arrays. The result lies strictly inside (-1, 1);
    ``eps`` damps the similarity of near-zero gradients towards 0.
    """
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}.")

    return (g_t * g_t2) / (np.abs(g_t) * np.abs(g_t2) + eps)


def _task_pairs(tasks: Iterable[Task]) -> List[TaskPair]:
    ordered = sorted(tasks, key=lambda task: task.value)

    return list(itertools.combinations(ordered, 2))


def pairwise_similarities(
    per_task_avg_grad: Mapping[Task, np.ndarray], eps: float
) -> PairArrays:
    """
    Similarity for every unordered task pair. Pairs are keyed with their
    tasks in name order.
    """
    if len(per_task_avg_grad) < 2:
        raise ConfigurationError(
            "The conflict penalty needs at least two tasks."
        )

    grads = {
        Task(task): np.asarray(values, dtype=np.float64)
        for task, values in per_task_avg_grad.items()
    }

    shapes = {arr.shape for arr in grads.values()}

    if len(shapes) != 1:
        raise DimensionError("Task gradient arrays differ in length.")

    return magicdict.FrozenMagicDict(
        [
            ((a, b), similarity(grads[a], grads[b], eps))
            for a, b in _task_pairs(grads)
        ]
    )


def penalty_from_similarities(sims: Iterable[np.ndarray]) -> np.ndarray:
    """
    ``max(0, -min over pairs)`` per channel.
    """
    stacked = np.stack([np.asarray(sim, dtype=np.float64) for sim in sims])

    return np.maximum(0.0, -stacked.min(axis=0))


def conflict_penalty(
    per_task_avg_grad: Mapping[Task, np.ndarray], eps: float
) -> np.ndarray:
    return penalty_from_similarities(
        pairwise_similarities(per_task_avg_grad, eps).values()
    )


class ConflictReport:
    __slots__ = ("_layer_id", "_pairwise_sim", "_penalty")

    def __init__(
        self,
        layer_id: str,
        pairwise_sim: Mapping[TaskPair, np.ndarray],
    ) -> None:
        self._layer_id = layer_id
        self._pairwise_sim = magicdict.FrozenMagicDict(pairwise_sim.items())
        self._penalty = penalty_from_similarities(
            self._pairwise_sim.values()
        )

    @property
    def layer_id(self) -> str:
        return self._layer_id

    @property
    def pairwise_sim(self) -> PairArrays:
        return self._pairwise_sim

    @property
    def penalty(self) -> np.ndarray:
        return self._penalty

    def similarity_of(self, a: Task, b: Task) -> np.ndarray:
        try:
            return self._pairwise_sim[(a, b)]

        except KeyError:
            return self._pairwise_sim[(b, a)]

    def to_record(self) -> Dict[str, Any]:
        return {
            "kind": "conflict",
            "layer": self._layer_id,
            "pairwise": {
                f"{a.value}|{b.value}": sim.tolist()
                for (a, b), sim in self._pairwise_sim.items()
            },
            "penalty": self._penalty.tolist(),
        }

    @classmethod
    def from_record(cls, record: Mapping[str, Any]) -> "ConflictReport":
        try:
            pairwise = {}

            for key, values in record["pairwise"].items():
                a, b = key.split("|")
                pairwise[(Task(a), Task(b))] = np.asarray(values, dtype=float)

            return cls(str(record["layer"]), pairwise)

        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"Malformed conflict record: {e}") from e

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"{self.__class__.__name__}(layer_id={self._layer_id!r}, "
            f"channels={len(self._penalty)})"
        )


def conflict_report(
    layer_id: str, per_task_avg_grad: Mapping[Task, np.ndarray], eps: float
) -> ConflictReport:
    return ConflictReport(
        layer_id, pairwise_similarities(per_task_avg_grad, eps)
    )
