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
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple,
    Union,
)
import dataclasses
import functools
import logging

import magicdict
import numpy as np

from . import config, datasets, losses, tensors, trainers
from .constants import Task
from .exceptions import ConfigurationError, TrainingDivergedError
from .models import Model, ModelGraph, forward_with_taps
from .tensors import Tensor

__all__ = [
    "ProjectionPair",
    "build_projection_pairs",
    "align_teacher_feature",
    "kd_loss",
    "total_loss",
    "effective_beta",
    "teacher_features",
    "distill_step",
    "DistillResult",
    "Distiller",
]

_LOG = logging.getLogger(__name__)


class ProjectionPair:
    """
    The two trainable 1x1 projections that bring one student tap and one
    teacher tap to a common channel dimension.

    Weights are stored as conv kernels shaped [D, C, 1, 1] without bias.
    """

    __slots__ = (
        "_student_tap",
        "_teacher_tap",
        "_student_proj",
        "_teacher_proj",
    )

    def __init__(
        self,
        student_tap: str,
        teacher_tap: str,
        student_proj: Tensor,
        teacher_proj: Tensor,
    ) -> None:
        if student_proj.ndim != 4 or teacher_proj.ndim != 4:
            raise ConfigurationError("Projections must be [D, C, 1, 1].")

        if student_proj.shape[0] != teacher_proj.shape[0]:
            raise ConfigurationError(
                f"Projections of {student_tap!r} -> {teacher_tap!r} output "
                f"{student_proj.shape[0]} and {teacher_proj.shape[0]} "
                "channels."
            )

        self._student_tap = student_tap
        self._teacher_tap = teacher_tap
        self._student_proj = student_proj
        self._teacher_proj = teacher_proj

    @property
    def student_tap(self) -> str:
        return self._student_tap

    @property
    def teacher_tap(self) -> str:
        return self._teacher_tap

    @property
    def student_proj(self) -> Tensor:
        return self._student_proj

    @property
    def teacher_proj(self) -> Tensor:
        return self._teacher_proj

    @property
    def dim(self) -> int:
        return self._student_proj.shape[0]

    def parameters(self) -> List[Tensor]:
        return [self._student_proj, self._teacher_proj]

    def project_student(self, feature: Tensor) -> Tensor:
        return tensors.conv2d(feature, self._student_proj)

    def project_teacher(self, feature: Tensor) -> Tensor:
        return tensors.conv2d(feature, self._teacher_proj)

    def __repr__(self) -> str:  # pragma: no cover
        parts = [
            ("student_tap", repr(self._student_tap)),
            ("teacher_tap", repr(self._teacher_tap)),
            ("student_channels", repr(self._student_proj.shape[1])),
            ("teacher_channels", repr(self._teacher_proj.shape[1])),
            ("dim", repr(self.dim)),
        ]

        args_repr = ", ".join([f"{k}={v}" for k, v in parts])

        return f"{self.__class__.__name__}({args_repr})"


def _identity(dim: int, channels: int) -> np.ndarray:
    return np.eye(dim, channels).reshape(dim, channels, 1, 1)


def _embedding(dim: int, kept: Sequence[int]) -> np.ndarray:
    # Kept channel j goes back to its original index kept[j].
    weight = np.zeros((dim, len(kept), 1, 1))
    weight[list(kept), np.arange(len(kept)), 0, 0] = 1.0

    return weight


def _he_normal(
    dim: int, channels: int, rng: np.random.Generator
) -> np.ndarray:
    return rng.normal(0.0, np.sqrt(2.0 / channels), size=(dim, channels, 1, 1))


def build_projection_pairs(
    student_graph: ModelGraph,
    teacher_graph: ModelGraph,
    layer_pairs: Sequence[Tuple[str, str]],
    *,
    projection_dim: Optional[int] = None,
    kept_channels: Optional[Mapping[str, Sequence[int]]] = None,
    seed: int = 0,
    dtype: Any = np.float32,
) -> List[ProjectionPair]:
    """
    ``kept_channels`` maps pruned layer ids to the original indices they
    kept. A student tap produced by such a layer starts with the embedding
    that puts every kept channel back in its original slot, provided the
    projection dimension equals the unpruned channel count.
    """
    rng = np.random.default_rng(seed)
    kept_channels = kept_channels or {}
    pairs = []

    for student_tap, teacher_tap in layer_pairs:
        if student_tap not in student_graph.tap_points:
            raise ConfigurationError(
                f"Student tap {student_tap!r} is not a tap point of the "
                "student."
            )

        if teacher_tap not in teacher_graph.tap_points:
            raise ConfigurationError(
                f"Teacher tap {teacher_tap!r} is not a tap point of the "
                "teacher."
            )

        c_s = student_graph.layer(student_tap).out_channels
        c_t = teacher_graph.layer(teacher_tap).out_channels
        dim = projection_dim or c_t

        producer = student_graph.producer_of(student_tap)
        kept = None if producer is None else kept_channels.get(producer.id)

        if kept is not None and len(kept) == c_s and max(kept) < dim:
            student_weight = _embedding(dim, kept)

        elif c_s == dim:
            student_weight = _identity(dim, c_s)

        else:
            student_weight = _he_normal(dim, c_s, rng)

        if c_t == dim:
            teacher_weight = _identity(dim, c_t)

        else:
            teacher_weight = _he_normal(dim, c_t, rng)

        pairs.append(
            ProjectionPair(
                student_tap,
                teacher_tap,
                Tensor(student_weight, dtype=dtype, requires_grad=True),
                Tensor(teacher_weight, dtype=dtype, requires_grad=True),
            )
        )

    return pairs


def align_teacher_feature(
    t_feat: Tensor, target: Tuple[int, int]
) -> Tensor:
    return tensors.resize_bilinear(t_feat, target)


def kd_loss(
    student_feats: Mapping[str, Tensor],
    teacher_feats: Mapping[str, Tensor],
    pairs: Sequence[ProjectionPair],
) -> Tensor:
    """
    Mean over pairs of the MSE between the projected student feature and
    the projected, spatially aligned teacher feature.

    Teacher features are cut from the tape first; only the student features
    and both projections receive gradients.
    """
    if not pairs:
        raise ConfigurationError(
            "Distillation is enabled but no layer pairs are configured."
        )

    total: Optional[Tensor] = None

    for pair in pairs:
        try:
            student = student_feats[pair.student_tap]
            teacher = teacher_feats[pair.teacher_tap].detach()

        except KeyError as e:
            raise ConfigurationError(
                f"No feature recorded for tap {e.args[0]!r}."
            ) from e

        aligned = align_teacher_feature(
            teacher, (student.shape[2], student.shape[3])
        )
        term = tensors.mse_loss(
            pair.project_student(student), pair.project_teacher(aligned)
        )
        total = term if total is None else total + term

    assert total is not None

    return total * (1.0 / len(pairs))


def total_loss(
    task_losses: Mapping[Task, Tensor],
    kd: Optional[Tensor],
    beta: float,
) -> Tensor:
    total = losses.sum_losses(task_losses)

    if kd is not None and beta != 0:
        total = total + kd * beta

    if not np.isfinite(total.item()):
        raise TrainingDivergedError("The total loss is not finite.")

    return total


def effective_beta(epoch: int, beta: float, warmup_epochs: int) -> float:
    """
    0 during the first ``warmup_epochs`` epochs (1-indexed), ``beta`` after.
    """
    return 0.0 if epoch <= warmup_epochs else beta


def teacher_features(
    teacher: Model,
    images: Union[Tensor, np.ndarray],
    taps: Sequence[str],
    *,
    half_precision: bool = True,
) -> "magicdict.FrozenMagicDict[str, Tensor]":
    with tensors.no_grad():
        _, features = forward_with_taps(teacher, images, taps)

        if half_precision:
            features = magicdict.FrozenMagicDict(
                [
                    (tap, tensors.to_half_precision(feature))
                    for tap, feature in features.items()
                ]
            )

    return magicdict.FrozenMagicDict(
        [(tap, feature.detach()) for tap, feature in features.items()]
    )


def distill_step(
    student: Model,
    teacher: Model,
    batch: datasets.Batch,
    pairs: Sequence[ProjectionPair],
    *,
    beta_effective: float,
    half_precision: bool = True,
) -> Tuple[Tensor, Dict[str, Tensor]]:
    """
    Forward pass of one distillation step.

    Returns the total loss and its named terms (per task, ``kd`` when the
    distillation term is active, and ``total``). With ``beta_effective``
    at 0 the teacher is not run at all.
    """
    if not teacher.frozen:
        raise ConfigurationError("The teacher must be frozen.")

    active = beta_effective > 0
    student_taps = [pair.student_tap for pair in pairs] if active else []

    predictions, student_feats = forward_with_taps(
        student, batch.images, student_taps
    )
    task_losses = losses.losses_from_predictions(predictions, batch)

    kd: Optional[Tensor] = None

    if active:
        feats = teacher_features(
            teacher,
            batch.images,
            [pair.teacher_tap for pair in pairs],
            half_precision=half_precision,
        )
        kd = kd_loss(student_feats, feats, pairs)

    total = total_loss(task_losses, kd, beta_effective)

    named: Dict[str, Tensor] = {
        task.value: loss for task, loss in task_losses.items()
    }

    if kd is not None:
        named["kd"] = kd

    named["total"] = total

    return total, named


@dataclasses.dataclass(frozen=True)
class DistillResult:
    epochs_run: int
    history: List[Dict[str, Any]]

    @property
    def kd_by_epoch(self) -> List[Optional[float]]:
        return [record["kd"] for record in self.history]


class Distiller:
    """
    Trains a (pruned) student against a frozen teacher with the task losses
    plus the warm-up-gated feature distillation term.

    The projections are trained with the student and dropped afterwards.
    """

    __slots__ = ("_student", "_teacher", "_config", "_pairs", "_optimizer")

    def __init__(
        self,
        student: Model,
        teacher: Model,
        distill_config: Optional[config.DistillConfig] = None,
        *,
        kept_channels: Optional[Mapping[str, Sequence[int]]] = None,
        seed: int = 0,
    ) -> None:
        cfg = distill_config or config.DistillConfig()

        self._student = student
        self._teacher = teacher.freeze()
        self._config = cfg
        self._pairs = build_projection_pairs(
            student.graph,
            teacher.graph,
            cfg.layer_pairs,
            projection_dim=cfg.projection_dim,
            kept_channels=kept_channels,
            seed=seed,
        )
        self._optimizer = trainers.SgdOptimizer(
            [
                *student.parameters(),
                *[p for pair in self._pairs for p in pair.parameters()],
            ],
            cfg.lr,
        )

    @property
    def student(self) -> Model:
        return self._student

    @property
    def teacher(self) -> Model:
        return self._teacher

    @property
    def pairs(self) -> List[ProjectionPair]:
        return list(self._pairs)

    @property
    def optimizer(self) -> trainers.SgdOptimizer:
        return self._optimizer

    def _step_loss(
        self, model: Model, batch: datasets.Batch, *, beta: float
    ) -> Dict[str, Tensor]:
        _, named = distill_step(
            model,
            self._teacher,
            batch,
            self._pairs,
            beta_effective=beta,
            half_precision=self._config.teacher_half_precision,
        )

        return named

    def fit(
        self,
        samples: Sequence[datasets.SyntheticSample],
        *,
        seed: int,
        log: Optional[trainers.TrainingLog] = None,
    ) -> DistillResult:
        cfg = self._config

        if cfg.epochs < 1:
            raise ConfigurationError(
                "The epoch cap is 0: no training performed."
            )

        log = log or trainers.TrainingLog()
        rng = np.random.default_rng(seed)
        warmup = cfg.resolved_warmup_epochs

        _LOG.info(
            "Distilling for %d epochs (%d warm-up) over %d pairs.",
            cfg.epochs,
            warmup,
            len(self._pairs),
        )

        for epoch in range(1, cfg.epochs + 1):
            beta = effective_beta(epoch, cfg.beta, warmup)

            means = trainers.train_epoch(
                self._student,
                samples,
                self._optimizer,
                batch_size=cfg.batch_size,
                rng=rng,
                loss_fn=functools.partial(self._step_loss, beta=beta),
            )

            log.append(
                {
                    "stage": "distill",
                    "epoch": epoch,
                    "losses": {
                        name: means[name] for name in ("det", "da", "lane")
                    },
                    "kd": means.get("kd"),
                    "total": means["total"],
                    "beta_effective": beta,
                    "lr": cfg.lr,
                    "seed": seed,
                }
            )

        self._student.zero_grad()

        return DistillResult(epochs_run=cfg.epochs, history=log.records)
