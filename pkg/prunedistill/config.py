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

from typing import Any, Dict, Literal, Optional, Tuple, Union
import json
import math
import os
import pathlib

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    NonNegativeFloat,
    NonNegativeInt,
    PositiveFloat,
    PositiveInt,
    ValidationError,
    model_validator,
)

from .exceptions import ConfigurationError

__all__ = [
    "DatasetConfig",
    "ModelConfig",
    "TrainConfig",
    "PruningConfig",
    "DistillConfig",
    "EvalConfig",
    "PathsConfig",
    "PipelineConfig",
    "parse_config",
    "load_config",
]


class _Section(BaseModel):
    model_config = ConfigDict(
        extra="forbid", frozen=True, populate_by_name=True
    )


class DatasetConfig(_Section):
    n_train: PositiveInt = 256
    n_val: PositiveInt = 64


class ModelConfig(_Section):
    """
    Reference architecture: three stride-2 backbone convs, one encoder conv,
    a pooled linear detection head and two upsampling segmentation heads.
    """

    image_size: PositiveInt = 64
    backbone_channels: Tuple[PositiveInt, ...] = (16, 32, 64)
    encoder_channels: PositiveInt = 64
    head_channels: PositiveInt = 16
    num_classes: PositiveInt = 2

    @model_validator(mode="after")
    def _check_geometry(self) -> "ModelConfig":
        stages = len(self.backbone_channels)

        if stages < 1:
            raise ValueError("backbone_channels must not be empty.")

        if self.image_size % (2**stages):
            raise ValueError(
                f"image_size must be divisible by {2 ** stages} "
                f"for {stages} stride-2 stages."
            )

        return self


class TrainConfig(_Section):
    epochs: NonNegativeInt = 20
    lr: PositiveFloat = 0.05
    batch_size: PositiveInt = 16
    patience: PositiveInt = 5
    min_delta: NonNegativeFloat = 0.0


class PruningConfig(_Section):
    tau: PositiveFloat = 0.25
    eps: PositiveFloat = 1e-12
    theta_max: float = 0.2
    theta_avg: float = 0.2
    theta_pen: float = 0.3
    conflict_weight: NonNegativeFloat = Field(default=0.2, alias="lambda")
    rate: float = Field(default=0.4, gt=0.0, lt=1.0)
    granularity: PositiveInt = 8
    alignment_rounding: Literal["up", "down"] = "up"
    calibration_batches: PositiveInt = 32
    calibration_batch_size: PositiveInt = 8
    use_conflict_penalty: bool = True


class DistillConfig(_Section):
    layer_pairs: Tuple[Tuple[str, str], ...] = (
        ("backbone.relu3", "backbone.relu3"),
        ("encoder.relu", "encoder.relu"),
    )
    beta: NonNegativeFloat = 1.0
    # 5 warm-up epochs out of 125.
    warmup_ratio: float = Field(default=0.04, ge=0.0, le=1.0)
    warmup_epochs: Optional[NonNegativeInt] = None
    epochs: NonNegativeInt = 20
    lr: PositiveFloat = 0.05
    batch_size: PositiveInt = 16
    projection_dim: Optional[PositiveInt] = None
    teacher_half_precision: bool = True

    @model_validator(mode="after")
    def _check_layer_pairs(self) -> "DistillConfig":
        if self.beta > 0 and not self.layer_pairs:
            raise ValueError(
                "layer_pairs must not be empty when distillation is enabled."
            )

        return self

    @property
    def resolved_warmup_epochs(self) -> int:
        if self.warmup_epochs is not None:
            return self.warmup_epochs

        # Halves round up.
        return math.floor(self.epochs * self.warmup_ratio + 0.5)


class EvalConfig(_Section):
    batch_size: PositiveInt = 32
    latency_runs: PositiveInt = 100


class PathsConfig(_Section):
    workdir: str = "artifacts"
    teacher: str = "teacher.ckpt"
    stats: str = "stats.jsonl"
    plan: str = "plan.json"
    pruned: str = "pruned.ckpt"
    student: str = "student.ckpt"
    report: str = "report.json"
    logs: str = "logs"

    def resolve(self, name: str) -> pathlib.Path:
        return pathlib.Path(self.workdir) / getattr(self, name)


class PipelineConfig(_Section):
    seed: NonNegativeInt = 7
    dataset: DatasetConfig = DatasetConfig()
    model: ModelConfig = ModelConfig()
    train: TrainConfig = TrainConfig()
    pruning: PruningConfig = PruningConfig()
    distill: DistillConfig = DistillConfig()
    evaluation: EvalConfig = Field(default=EvalConfig(), alias="eval")
    paths: PathsConfig = PathsConfig()

    def echo(self) -> Dict[str, Any]:
        """
        The JSON-compatible dump embedded into every artifact.
        """
        return self.model_dump(mode="json", by_alias=True)

    def with_seed(self, seed: int) -> "PipelineConfig":
        return self.model_copy(update={"seed": seed})

    def with_workdir(
        self, workdir: Union[str, "os.PathLike[str]"]
    ) -> "PipelineConfig":
        paths = self.paths.model_copy(update={"workdir": str(workdir)})

        return self.model_copy(update={"paths": paths})


def _reject_constant(name: str) -> Any:
    raise ConfigurationError(f"{name} is not valid JSON.")


def parse_config(text: str) -> PipelineConfig:
    try:
        raw = json.loads(text, parse_constant=_reject_constant)

    except json.JSONDecodeError as e:
        raise ConfigurationError(f"Config is not valid JSON: {e}") from e

    if not isinstance(raw, dict):
        raise ConfigurationError("Config must be a JSON object.")

    try:
        return PipelineConfig.model_validate(raw)

    except ValidationError as e:
        raise ConfigurationError(str(e)) from e


def load_config(
    path: Union[str, os.PathLike], *, seed: Optional[int] = None
) -> PipelineConfig:
    try:
        text = pathlib.Path(path).read_text(encoding="utf-8")

    except OSError as e:
        raise ConfigurationError(f"Cannot read config {path}: {e}") from e

    config = parse_config(text)

    return config if seed is None else config.with_seed(seed)
