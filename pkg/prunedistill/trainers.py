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
    Callable,
    Dict,
    Iterable,
    List,
    Mapping,
    Optional,
    Sequence,
    Union,
)
import dataclasses
import logging
import os

import magicdict
import numpy as np

from . import config, datasets, losses, tensors
from .codecs import compose_json_line
from .constants import TASKS
from .exceptions import ConfigurationError, TrainingDivergedError
from .models import Model
from .tensors import Tensor

__all__ = [
    "SgdOptimizer",
    "TrainingLog",
    "FitResult",
    "train_epoch",
    "evaluate_losses",
    "fit",
]

_LOG = logging.getLogger(__name__)

LossFn = Callable[[Model, datasets.Batch], Mapping[str, Tensor]]


class SgdOptimizer:
    """
    Plain stochastic gradient descent with a constant learning rate.

    Parameters without a gradient are left untouched, so a parameter that
    took no part in the loss keeps its exact value.
    """

    __slots__ = ("_params", "_lr")

    def __init__(self, params: Iterable[Tensor], lr: float) -> None:
        if not lr > 0:
            raise ConfigurationError(
                f"The learning rate must be positive, got {lr}."
            )

        self._params = list(params)
        self._lr = lr

        for param in self._params:
            if not param.requires_grad:
                raise ConfigurationError(
                    "The optimizer was given a parameter that does not "
                    "require gradients."
                )

    @property
    def params(self) -> List[Tensor]:
        return list(self._params)

    @property
    def lr(self) -> float:
        return self._lr

    def zero_grad(self) -> None:
        for param in self._params:
            param.zero_grad()

    def step(self) -> None:
        for param in self._params:
            if param.grad is None:
                continue

            if not np.all(np.isfinite(param.grad)):
                raise TrainingDivergedError("A gradient is not finite.")

            param.data = (param.data - self._lr * param.grad).astype(
                param.dtype
            )


class TrainingLog:
    """
    Per-epoch records, kept in memory and appended as JSON lines to
    ``path`` when one is given.
    """

    __slots__ = ("_path", "_records")

    def __init__(
        self, path: Optional[Union[str, "os.PathLike[str]"]] = None
    ) -> None:
        self._path = path
        self._records: List[Dict[str, Any]] = []

        if path is not None:
            os.makedirs(os.path.dirname(os.fspath(path)) or ".", exist_ok=True)

            with open(path, "w", encoding="utf-8"):
                pass

    @property
    def records(self) -> List[Dict[str, Any]]:
        return list(self._records)

    def append(self, record: Mapping[str, Any]) -> None:
        line = compose_json_line(record)
        self._records.append(dict(record))

        _LOG.info("%s", line.rstrip("\n"))

        if self._path is not None:
            with open(self._path, "a", encoding="utf-8") as f:
                f.write(line)


@dataclasses.dataclass(frozen=True)
class FitResult:
    epochs_run: int
    stopped_early: bool
    initial_val: Dict[str, float]
    final_val: Dict[str, float]
    history: List[Dict[str, Any]]


def _default_loss(model: Model, batch: datasets.Batch) -> Mapping[str, Tensor]:
    task_losses = losses.task_losses(model, batch)
    named = {task.value: loss for task, loss in task_losses.items()}
    named["total"] = losses.sum_losses(task_losses)

    return named


class _RunningMeans:
    __slots__ = ("_sums", "_count")

    def __init__(self) -> None:
        self._sums: Dict[str, float] = {}
        self._count = 0

    def add(self, values: Mapping[str, Tensor], weight: int) -> None:
        for name, value in values.items():
            self._sums[name] = self._sums.get(name, 0.0) + (
                value.item() * weight
            )

        self._count += weight

    def means(self) -> Dict[str, float]:
        return {
            name: total / max(self._count, 1)
            for name, total in self._sums.items()
        }


def train_epoch(
    model: Model,
    samples: Sequence[datasets.SyntheticSample],
    optimizer: SgdOptimizer,
    *,
    batch_size: int,
    rng: np.random.Generator,
    loss_fn: Optional[LossFn] = None,
) -> Dict[str, float]:
    """
    One pass over ``samples`` in an order drawn from ``rng``.

    ``loss_fn`` returns named scalar losses; the one named ``total`` is
    minimised. Returns the sample-weighted mean of every named loss.
    """
    step_loss = loss_fn or _default_loss
    means = _RunningMeans()

    for batch in datasets.iter_batches(samples, batch_size, rng):
        named = step_loss(model, batch)
        total = named["total"]

        if not np.isfinite(total.item()):
            raise TrainingDivergedError("The total loss is not finite.")

        optimizer.zero_grad()
        total.backward()
        optimizer.step()

        means.add(named, len(batch))

    return means.means()


def evaluate_losses(
    model: Model,
    samples: Sequence[datasets.SyntheticSample],
    batch_size: int = 32,
) -> "magicdict.FrozenMagicDict[str, float]":
    means = _RunningMeans()

    with tensors.no_grad():
        for batch in datasets.iter_batches(samples, batch_size):
            means.add(_default_loss(model, batch), len(batch))

    values = means.means()

    return magicdict.FrozenMagicDict(
        [(task.value, values[task.value]) for task in TASKS]
        + [("total", values["total"])]
    )


def fit(
    model: Model,
    train_samples: Sequence[datasets.SyntheticSample],
    val_samples: Sequence[datasets.SyntheticSample],
    train_config: Optional[config.TrainConfig] = None,
    *,
    seed: int,
    log: Optional[TrainingLog] = None,
) -> FitResult:
    """
    Train ``model`` in place until the validation total stops improving for
    ``patience`` epochs or the epoch cap is hit.
    """
    cfg = train_config or config.TrainConfig()

    if cfg.epochs < 1:
        raise ConfigurationError("The epoch cap is 0: no training performed.")

    log = log or TrainingLog()
    rng = np.random.default_rng(seed)
    optimizer = SgdOptimizer(model.parameters(), cfg.lr)

    initial_val = dict(evaluate_losses(model, val_samples, cfg.batch_size))
    best = initial_val["total"]
    stale = 0
    val = initial_val
    epoch = 0
    stopped_early = False

    for epoch in range(1, cfg.epochs + 1):
        train = train_epoch(
            model,
            train_samples,
            optimizer,
            batch_size=cfg.batch_size,
            rng=rng,
        )
        val = dict(evaluate_losses(model, val_samples, cfg.batch_size))

        log.append(
            {
                "stage": "train",
                "epoch": epoch,
                "losses": {task.value: train[task.value] for task in TASKS},
                "total": train["total"],
                "val_total": val["total"],
                "lr": cfg.lr,
                "seed": seed,
            }
        )

        if val["total"] < best - cfg.min_delta:
            best = val["total"]
            stale = 0

        else:
            stale += 1

        if stale >= cfg.patience:
            _LOG.info(
                "Validation loss plateaued for %d epochs; stopping at "
                "epoch %d.",
                stale,
                epoch,
            )
            stopped_early = True
            break

    model.zero_grad()

    return FitResult(
        epochs_run=epoch,
        stopped_early=stopped_early,
        initial_val=initial_val,
        final_val=val,
        history=log.records,
    )
