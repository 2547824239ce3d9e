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

from typing import Iterator, List, Optional, Sequence
import dataclasses

import numpy as np

from .exceptions import ConfigurationError

__all__ = [
    "SyntheticSample",
    "Batch",
    "generate_dataset",
    "collate",
    "iter_batches",
]

_SKY = np.array([0.35, 0.45, 0.65])
_GROUND = np.array([0.25, 0.25, 0.22])
_ROAD = np.array([0.45, 0.45, 0.45])
_LANE = np.array([0.95, 0.95, 0.90])
_CLASS_COLORS = (np.array([0.85, 0.15, 0.10]), np.array([0.10, 0.20, 0.85]))


@dataclasses.dataclass(frozen=True)
class SyntheticSample:
    """
    One road-scene-like image with its three targets.

    ``box`` is (cx, cy, w, h) normalised to [0, 1]; the masks are 0/1.
    """

    image: np.ndarray
    box: np.ndarray
    label: int
    da_mask: np.ndarray
    lane_mask: np.ndarray


@dataclasses.dataclass(frozen=True)
class Batch:
    images: np.ndarray
    boxes: np.ndarray
    labels: np.ndarray
    da_masks: np.ndarray
    lane_masks: np.ndarray

    def __len__(self) -> int:
        return int(self.images.shape[0])


def _draw_sample(rng: np.random.Generator, size: int) -> SyntheticSample:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    horizon = int(rng.integers(int(0.45 * size), int(0.6 * size) + 1))

    shade = 1.0 - 0.3 * yy / size
    image = np.where(
        (yy < horizon)[None],
        _SKY[:, None, None] * shade[None],
        _GROUND[:, None, None],
    )

    # Drivable area: a trapezoid widening towards the bottom edge.
    centre = rng.uniform(0.35 * size, 0.65 * size)
    top_half_width = rng.uniform(0.08 * size, 0.16 * size)
    slope = rng.uniform(0.4, 0.9)
    da = (yy >= horizon) & (
        np.abs(xx - centre) <= top_half_width + (yy - horizon) * slope
    )
    image[:, da] = _ROAD[:, None]

    # Lanes: one-pixel near-vertical lines below the horizon.
    lane = np.zeros((size, size), dtype=bool)

    for _ in range(int(rng.integers(1, 4))):
        x_start = rng.uniform(0.1 * size, 0.9 * size)
        drift = rng.uniform(-0.25, 0.25)
        y_start = int(rng.integers(horizon, max(horizon + 1, size - 8)))
        rows = np.arange(y_start, size)
        cols = np.clip(
            np.round(x_start + (rows - y_start) * drift), 0, size - 1
        ).astype(np.int64)
        lane[rows, cols] = True

    image[:, lane] = _LANE[:, None]

    label = int(rng.integers(0, 2))
    # Sides span 1/8 to 3/8 of the image.
    low, high = max(2, size // 8), max(3, 3 * size // 8 + 1)
    w = int(rng.integers(low, high))
    h = int(rng.integers(low, high))
    x0 = int(rng.integers(0, size - w + 1))
    y0 = int(rng.integers(0, size - h + 1))
    color = _CLASS_COLORS[label] + rng.uniform(-0.05, 0.05, size=3)
    image[:, y0 : y0 + h, x0 : x0 + w] = color[:, None, None]
    # The box occludes road and lane markings.
    da[y0 : y0 + h, x0 : x0 + w] = False
    lane[y0 : y0 + h, x0 : x0 + w] = False

    image = np.clip(image + rng.normal(0.0, 0.02, size=image.shape), 0, 1)

    box = np.array([x0 + w / 2, y0 + h / 2, w, h], dtype=np.float64) / size

    return SyntheticSample(
        image=image,
        box=box,
        label=label,
        da_mask=da[None].astype(np.float64),
        lane_mask=lane[None].astype(np.float64),
    )


def generate_dataset(
    seed: int, n: int, *, image_size: int = 64
) -> List[SyntheticSample]:
    """
    Generate ``n`` samples; the result is a pure function of the arguments.
    """
    if n < 1:
        raise ConfigurationError(f"Dataset size must be at least 1, got {n}.")

    rng = np.random.default_rng(seed)

    return [_draw_sample(rng, image_size) for _ in range(n)]


def collate(samples: Sequence[SyntheticSample]) -> Batch:
    if not samples:
        raise ConfigurationError("Cannot build an empty batch.")

    return Batch(
        images=np.stack([s.image for s in samples]),
        boxes=np.stack([s.box for s in samples]),
        labels=np.array([s.label for s in samples], dtype=np.int64),
        da_masks=np.stack([s.da_mask for s in samples]),
        lane_masks=np.stack([s.lane_mask for s in samples]),
    )


def iter_batches(
    samples: Sequence[SyntheticSample],
    batch_size: int,
    rng: Optional[np.random.Generator] = None,
) -> Iterator[Batch]:
    """
    Yield consecutive batches, shuffled by ``rng`` when given.
    """
    order: Sequence[int] = range(len(samples))

    if rng is not None:
        order = rng.permutation(len(samples)).tolist()

    for start in range(0, len(samples), batch_size):
        yield collate([samples[i] for i in order[start : start + batch_size]])

