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
    List,
    Mapping,
    Optional,
    Sequence,
    Union,
)

import magicdict
import numpy as np

from . import config, datasets, losses
from .constants import TASKS, Task
from .exceptions import ConfigurationError, DimensionError, PruningError
from .models import Model, forward_with_taps
from .tensors import Tensor

__all__ = [
    "ChannelStatistics",
    "AggregatedImportance",
    "minmax_normalize",
    "normalize_per_task",
    "softmin_aggregate",
    "aggregate_importance",
    "collect_statistics",
]

_ArrayLike = Union[Tensor, np.ndarray]
TaskArrays = "magicdict.FrozenMagicDict[Task, np.ndarray]"
LayerTaskArrays = "magicdict.FrozenMagicDict[str, TaskArrays]"


def _as_task(task: Union[Task, str]) -> Task:
    try:
        return Task(task)

    except ValueError as e:
        raise ConfigurationError(f"Unknown task {task!r}.") from e


def _as_array(value: _ArrayLike) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


class ChannelStatistics:
    """
    Running per-task Taylor statistics of one conv layer's output channels.

    For each task two running means are kept over every (sample, row,
    column) position seen so far: ``|a * g|`` (the importance) and the
    signed gradient ``g``.
    """

    __slots__ = (
        "_layer_id",
        "_channels",
        "_importance",
        "_avg_grad",
        "_positions",
        "_batches",
    )

    def __init__(
        self,
        layer_id: str,
        channels: int,
        tasks: Iterable[Union[Task, str]] = TASKS,
    ) -> None:
        if channels < 1:
            raise ConfigurationError("A layer needs at least one channel.")

        self._layer_id = layer_id
        self._channels = channels

        task_list = [_as_task(task) for task in tasks]

        self._importance = {t: np.zeros(channels) for t in task_list}
        self._avg_grad = {t: np.zeros(channels) for t in task_list}
        self._positions = {t: 0 for t in task_list}
        self._batches = {t: 0 for t in task_list}

    @property
    def layer_id(self) -> str:
        return self._layer_id

    @property
    def channels(self) -> int:
        return self._channels

    @property
    def tasks(self) -> List[Task]:
        return list(self._importance.keys())

    @property
    def sample_count(self) -> int:
        """
        Batches accumulated, counted for the least-fed task.
        """
        return min(self._batches.values(), default=0)

    @property
    def per_task_importance(self) -> TaskArrays:
        return magicdict.FrozenMagicDict(
            [(t, arr.copy()) for t, arr in self._importance.items()]
        )

    @property
    def per_task_avg_grad(self) -> TaskArrays:
        return magicdict.FrozenMagicDict(
            [(t, arr.copy()) for t, arr in self._avg_grad.items()]
        )

    def accumulate(
        self,
        task: Union[Task, str],
        activations: _ArrayLike,
        gradients: _ArrayLike,
    ) -> None:
        task = _as_task(task)

        if task not in self._importance:
            raise ConfigurationError(
                f"Task {task.value!r} is not tracked for {self._layer_id!r}."
            )

        a = np.asarray(_as_array(activations), dtype=np.float64)
        g = np.asarray(_as_array(gradients), dtype=np.float64)

        if a.shape != g.shape:
            raise DimensionError(
                f"Activations {a.shape} and gradients {g.shape} differ in "
                "shape."
            )

        if a.ndim != 4 or a.shape[1] != self._channels:
            raise DimensionError(
                f"Expected [N, {self._channels}, H, W] for "
                f"{self._layer_id!r}, got {a.shape}."
            )

        positions = a.shape[0] * a.shape[2] * a.shape[3]

        if positions == 0:
            return

        batch_importance = np.abs(a * g).mean(axis=(0, 2, 3))
        batch_grad = g.mean(axis=(0, 2, 3))

        total = self._positions[task] + positions
        weight = positions / total

        self._importance[task] += (
            batch_importance - self._importance[task]
        ) * weight
        self._avg_grad[task] += (batch_grad - self._avg_grad[task]) * weight
        self._positions[task] = total
        self._batches[task] += 1

    def to_records(self) -> List[Dict[str, Any]]:
        return [
            {
                "kind": "importance",
                "layer": self._layer_id,
                "task": task.value,
                "importance": self._importance[task].tolist(),
                "avg_grad": self._avg_grad[task].tolist(),
                "positions": self._positions[task],
                "sample_count": self._batches[task],
            }
            for task in self._importance
        ]

    @classmethod
    def from_records(
        cls, records: Iterable[Mapping[str, Any]]
    ) -> "magicdict.FrozenMagicDict[str, ChannelStatistics]":
        """
        Rebuild statistics from ``kind == "importance"`` records, keyed by
        layer id in first-seen order; other record kinds are skipped.
        """
        grouped: Dict[str, List[Mapping[str, Any]]] = {}

        for record in records:
            if record.get("kind") == "importance":
                grouped.setdefault(str(record["layer"]), []).append(record)

        result = []

        try:
            for layer_id, items in grouped.items():
                channels = len(items[0]["importance"])
                stats = cls(
                    layer_id, channels, [item["task"] for item in items]
                )

                for item in items:
                    task = _as_task(item["task"])
                    importance = np.asarray(item["importance"], dtype=float)
                    avg_grad = np.asarray(item["avg_grad"], dtype=float)

                    if importance.shape != (channels,) or (
                        avg_grad.shape != (channels,)
                    ):
                        raise DimensionError(
                            f"Inconsistent channel count for {layer_id!r}."
                        )

                    stats._importance[task] = importance
                    stats._avg_grad[task] = avg_grad
                    stats._positions[task] = int(item.get("positions", 0))
                    stats._batches[task] = int(item["sample_count"])

                result.append((layer_id, stats))

        except (KeyError, TypeError) as e:
            raise ConfigurationError(
                f"Malformed importance record: {e}"
            ) from e

        return magicdict.FrozenMagicDict(result)

    def __repr__(self) -> str:  # pragma: no cover
        parts = [
            ("layer_id", repr(self._layer_id)),
            ("channels", repr(self._channels)),
            ("sample_count", repr(self.sample_count)),
        ]

        args_repr = ", ".join([f"{k}={v}" for k, v in parts])

        return f"{self.__class__.__name__}({args_repr})"


class AggregatedImportance:
    __slots__ = ("_layer_id", "_normalized", "_unified", "_i_max", "_i_avg")

    def __init__(
        self,
        layer_id: str,
        normalized: Mapping[Task, np.ndarray],
        unified: np.ndarray,
    ) -> None:
        self._layer_id = layer_id
        self._normalized = magicdict.FrozenMagicDict(normalized.items())
        self._unified = unified

        stacked = np.stack(list(self._normalized.values()))
        self._i_max = stacked.max(axis=0)
        self._i_avg = stacked.mean(axis=0)

    @property
    def layer_id(self) -> str:
        return self._layer_id

    @property
    def normalized(self) -> TaskArrays:
        return self._normalized

    @property
    def unified(self) -> np.ndarray:
        return self._unified

    @property
    def i_max(self) -> np.ndarray:
        return self._i_max

    @property
    def i_avg(self) -> np.ndarray:
        return self._i_avg

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"{self.__class__.__name__}(layer_id={self._layer_id!r}, "
            f"channels={len(self._unified)})"
        )


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """
    Map ``values`` onto [0, 1]; a constant input maps to 0.5 everywhere.
    """
    arr = np.asarray(values, dtype=np.float64)

    if arr.size == 0:
        return arr.copy()

    low, high = arr.min(), arr.max()

    if not high > low:
        return np.full(arr.shape, 0.5)

    return np.clip((arr - low) / (high - low), 0.0, 1.0)


def normalize_per_task(
    stats: Sequence[ChannelStatistics],
) -> LayerTaskArrays:
    """
    Min-max normalise each task's importance jointly over every channel of
    every given layer, then split the result back per layer.
    """
    if not stats:
        raise PruningError("No layer statistics to normalise.")

    for layer_stats in stats:
        if layer_stats.sample_count < 1:
            raise PruningError(
                f"Layer {layer_stats.layer_id!r} has no accumulated batches."
            )

    tasks = stats[0].tasks

    for layer_stats in stats[1:]:
        if set(layer_stats.tasks) != set(tasks):
            raise PruningError("Layers track different task sets.")

    bounds = np.cumsum([0, *[s.channels for s in stats]])
    per_task = {}

    for task in tasks:
        joined = np.concatenate([s._importance[task] for s in stats])
        per_task[task] = minmax_normalize(joined)

    return magicdict.FrozenMagicDict(
        [
            (
                layer_stats.layer_id,
                magicdict.FrozenMagicDict(
                    [
                        (task, per_task[task][bounds[i] : bounds[i + 1]])
                        for task in tasks
                    ]
                ),
            )
            for i, layer_stats in enumerate(stats)
        ]
    )


def softmin_aggregate(
    per_task: Mapping[Task, np.ndarray], tau: float
) -> np.ndarray:
    """
    ``-tau * ln(sum_t exp(-I_t / tau))`` per channel.

    The task values of each channel are sorted before summation, so the
    result does not depend on task order.
    """
    if not tau > 0:
        raise ConfigurationError(f"tau must be positive, got {tau}.")

    if not per_task:
        raise ConfigurationError("At least one task is required.")

    try:
        stacked = np.stack(
            [np.asarray(v, dtype=np.float64) for v in per_task.values()]
        )

    except ValueError as e:
        raise DimensionError("Task arrays differ in length.") from e

    stacked = np.sort(stacked, axis=0)
    low = stacked[0]

    return low - tau * np.log(np.exp(-(stacked - low) / tau).sum(axis=0))


def aggregate_importance(
    stats: Sequence[ChannelStatistics], tau: float
) -> "magicdict.FrozenMagicDict[str, AggregatedImportance]":
    normalized = normalize_per_task(stats)

    return magicdict.FrozenMagicDict(
        [
            (
                layer_id,
                AggregatedImportance(
                    layer_id, per_task, softmin_aggregate(per_task, tau)
                ),
            )
            for layer_id, per_task in normalized.items()
        ]
    )


def collect_statistics(
    model: Model,
    samples: Sequence[datasets.SyntheticSample],
    pruning_config: Optional[config.PruningConfig] = None,
) -> List[ChannelStatistics]:
    """
    Accumulate Taylor statistics on the pre-activation output of every
    prunable layer.

    Each calibration batch is run forward once; every task loss is then
    backpropagated on its own, so the recorded gradients belong to a single
    task. Parameter gradients are cleared afterwards.
    """
    cfg = pruning_config or config.PruningConfig()
    graph = model.graph
    prunable = [spec.id for spec in graph.prunable_layers]

    if not prunable:
        raise PruningError("The model has no prunable layers.")

    stats = [
        ChannelStatistics(spec.id, spec.out_channels)
        for spec in graph.prunable_layers
    ]

    for index, batch in enumerate(
        datasets.iter_batches(samples, cfg.calibration_batch_size)
    ):
        if index >= cfg.calibration_batches:
            break

        predictions, features = forward_with_taps(
            model, batch.images, prunable
        )
        task_losses = losses.losses_from_predictions(predictions, batch)

        for task in TASKS:
            model.zero_grad()

            for feature in features.values():
                feature.zero_grad()

            task_losses[task].backward()

            for layer_stats in stats:
                feature = features[layer_stats.layer_id]
                grad = (
                    feature.grad
                    if feature.grad is not None
                    else np.zeros(feature.shape)
                )
                layer_stats.accumulate(task, feature, grad)

    model.zero_grad()

    if stats[0].sample_count < 1:
        raise PruningError("No calibration batch was available.")

    return stats
