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

from typing import Any, Dict, Mapping, Optional, Sequence
import dataclasses
import statistics
import time

import numpy as np

from . import config, datasets, tensors, trainers
from .constants import Task
from .exceptions import ConfigurationError
from .models import Model, forward_with_taps

__all__ = [
    "METRICS_NOTE",
    "EvaluationReport",
    "evaluate_model",
    "measure_latency",
    "compare_reports",
]

METRICS_NOTE = (
    "Toy metrics on synthetic data; not comparable to BDD100K results. "
    "The 32.7% parameter reduction reported for a full-scale driving model "
    "is quoted for context only."
)


@dataclasses.dataclass(frozen=True)
class EvaluationReport:
    losses: Dict[str, float]
    da_pixel_accuracy: float
    lane_pixel_accuracy: float
    box_mse: float
    class_accuracy: float
    parameters: int
    latency_ms: Optional[float] = None

    def metrics(self) -> Dict[str, float]:
        """
        Every deterministic number of the report, flattened.
        """
        flat = {f"loss.{name}": value for name, value in self.losses.items()}
        flat.update(
            {
                "da_pixel_accuracy": self.da_pixel_accuracy,
                "lane_pixel_accuracy": self.lane_pixel_accuracy,
                "box_mse": self.box_mse,
                "class_accuracy": self.class_accuracy,
                "parameters": float(self.parameters),
            }
        )

        return flat

    def to_dict(self) -> Dict[str, Any]:
        return {
            **dataclasses.asdict(self),
            "note": METRICS_NOTE,
        }


def measure_latency(
    model: Model, sample: datasets.SyntheticSample, runs: int
) -> float:
    """
    Median single-image forward wall time in milliseconds.
    """
    images = sample.image[np.newaxis]
    timings = []

    with tensors.no_grad():
        for _ in range(runs):
            started = time.perf_counter()
            forward_with_taps(model, images)
            timings.append((time.perf_counter() - started) * 1000.0)

    return statistics.median(timings)


def evaluate_model(
    model: Model,
    samples: Sequence[datasets.SyntheticSample],
    eval_config: Optional[config.EvalConfig] = None,
    *,
    measure_time: bool = True,
) -> EvaluationReport:
    cfg = eval_config or config.EvalConfig()

    if not samples:
        raise ConfigurationError("Nothing to evaluate.")

    da_hits = lane_hits = pixels = 0.0
    box_sq = 0.0
    class_hits = 0
    count = 0

    with tensors.no_grad():
        for batch in datasets.iter_batches(samples, cfg.batch_size):
            predictions, _ = forward_with_taps(model, batch.images)
            det = predictions[Task.DET].data

            box_sq += float(((det[:, :4] - batch.boxes) ** 2).sum())
            predicted = det[:, 4:].argmax(axis=1)
            class_hits += int((predicted == batch.labels).sum())

            da = predictions[Task.DA].data > 0
            lane = predictions[Task.LANE].data > 0
            da_hits += float((da == (batch.da_masks > 0.5)).sum())
            lane_hits += float((lane == (batch.lane_masks > 0.5)).sum())
            pixels += batch.da_masks.size
            count += len(batch)

    return EvaluationReport(
        losses=dict(trainers.evaluate_losses(model, samples, cfg.batch_size)),
        da_pixel_accuracy=da_hits / pixels,
        lane_pixel_accuracy=lane_hits / pixels,
        box_mse=box_sq / (4 * count),
        class_accuracy=class_hits / count,
        parameters=model.num_parameters(),
        latency_ms=(
            measure_latency(model, samples[0], cfg.latency_runs)
            if measure_time
            else None
        ),
    )


def compare_reports(
    a: EvaluationReport, b: EvaluationReport
) -> Mapping[str, float]:
    """
    ``b - a`` for every deterministic metric; latency is left out.
    """
    lhs, rhs = a.metrics(), b.metrics()

    return {name: rhs[name] - lhs[name] for name in lhs}
