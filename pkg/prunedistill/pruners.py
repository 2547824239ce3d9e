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
import hashlib
import json
import math

import magicdict
import numpy as np

from . import config, conflicts, importance
from .codecs import decode_scores, encode_scores
from .exceptions import (
    CheckpointMalformedError,
    ConfigurationError,
    PruningError,
    StructuralError,
)
from .layers import LayerParameters
from .models import Model, ModelGraph, parameter_count
from .tensors import Tensor

__all__ = [
    "Thresholds",
    "safe_gate",
    "pruning_score",
    "aligned_kept_count",
    "ChannelSelection",
    "select_channels",
    "LayerPlan",
    "PruningPlan",
    "build_plan",
    "prune_graph",
    "apply_plan",
    "predicted_parameter_count",
    "format_plan_table",
]

_Flags = Union[bool, np.ndarray]
_Real = Union[float, np.ndarray]


@dataclasses.dataclass(frozen=True)
class Thresholds:
    theta_max: float = 0.2
    theta_avg: float = 0.2
    theta_pen: float = 0.3

    @classmethod
    def from_config(cls, cfg: config.PruningConfig) -> "Thresholds":
        return cls(cfg.theta_max, cfg.theta_avg, cfg.theta_pen)


def safe_gate(
    i_max: _Real, i_avg: _Real, p: _Real, thresholds: Thresholds
) -> _Flags:
    """
    A channel may be pruned only while no task relies on it
    (``i_max < theta_max``) and it is either weak on average or strongly
    conflicted.
    """
    result = np.logical_and(
        np.less(i_max, thresholds.theta_max),
        np.logical_or(
            np.less(i_avg, thresholds.theta_avg),
            np.greater(p, thresholds.theta_pen),
        ),
    )

    return bool(result) if np.ndim(result) == 0 else result


def pruning_score(
    unified: _Real, p: _Real, safe: _Flags, conflict_weight: float
) -> _Real:
    """
    ``unified - conflict_weight * p`` for safe channels, ``+inf`` otherwise.
    """
    if conflict_weight < 0:
        raise ConfigurationError(
            f"The conflict weight must not be negative, got {conflict_weight}."
        )

    scores = np.where(
        safe, np.asarray(unified) - conflict_weight * np.asarray(p), np.inf
    )

    return float(scores) if np.ndim(scores) == 0 else scores


def aligned_kept_count(
    channels: int, rate: float, granularity: int, rounding: str = "up"
) -> int:
    if not 0.0 < rate < 1.0:
        raise PruningError(f"The pruning rate must be in (0, 1), got {rate}.")

    if granularity < 1:
        raise PruningError("The alignment granularity must be positive.")

    # Guard against 32 * 0.6 landing a hair above 19.2.
    raw = math.ceil(channels * (1.0 - rate) - 1e-9)

    if rounding == "up":
        kept = math.ceil(raw / granularity) * granularity

    elif rounding == "down":
        kept = max(granularity, raw // granularity * granularity)

    else:
        raise ConfigurationError(f"Unknown alignment rounding {rounding!r}.")

    return min(kept, channels)


@dataclasses.dataclass(frozen=True)
class ChannelSelection:
    pruned_indices: Tuple[int, ...]
    kept_count: int
    target_kept: int
    shortfall: bool


def select_channels(
    scores: Sequence[float],
    rate: float,
    granularity: int = 8,
    *,
    rounding: str = "up",
) -> ChannelSelection:
    """
    Prune the lowest-scoring finite channels down to the aligned kept
    count; ties go to the lower index.

    When fewer finite scores exist than channels to prune, only those are
    pruned and the selection is flagged as a shortfall (the kept count is
    then not aligned).
    """
    arr = np.asarray(scores, dtype=np.float64)

    if arr.ndim != 1:
        raise PruningError("Scores must be a flat array.")

    if np.isnan(arr).any():
        raise PruningError("Scores must not contain NaN.")

    channels = len(arr)
    target_kept = aligned_kept_count(channels, rate, granularity, rounding)
    target_pruned = channels - target_kept

    order = np.argsort(arr, kind="stable")
    finite = [int(i) for i in order if np.isfinite(arr[i])]

    if len(finite) >= target_pruned:
        pruned = finite[:target_pruned]
        shortfall = False

    else:
        pruned = finite
        shortfall = True

    return ChannelSelection(
        pruned_indices=tuple(sorted(pruned)),
        kept_count=channels - len(pruned),
        target_kept=target_kept,
        shortfall=shortfall,
    )


class LayerPlan:
    """
    The pruning decision for one layer, with the per-channel evidence it
    was made from.
    """

    __slots__ = (
        "_layer_id",
        "_scores",
        "_safe",
        "_selection",
        "_i_max",
        "_i_avg",
        "_penalty",
        "_unified",
    )

    def __init__(
        self,
        layer_id: str,
        *,
        scores: np.ndarray,
        safe: np.ndarray,
        selection: ChannelSelection,
        i_max: np.ndarray,
        i_avg: np.ndarray,
        penalty: np.ndarray,
        unified: np.ndarray,
    ) -> None:
        self._layer_id = layer_id
        self._scores = np.asarray(scores, dtype=np.float64)
        self._safe = np.asarray(safe, dtype=bool)
        self._selection = selection
        self._i_max = np.asarray(i_max, dtype=np.float64)
        self._i_avg = np.asarray(i_avg, dtype=np.float64)
        self._penalty = np.asarray(penalty, dtype=np.float64)
        self._unified = np.asarray(unified, dtype=np.float64)

        if selection.kept_count + len(selection.pruned_indices) != len(
            self._scores
        ):
            raise PruningError(
                f"Layer {layer_id!r}: kept and pruned channels do not add "
                "up."
            )

        for index in selection.pruned_indices:
            if not 0 <= index < len(self._scores) or not self._safe[index]:
                raise PruningError(
                    f"Layer {layer_id!r}: channel {index} cannot be pruned."
                )

    @property
    def layer_id(self) -> str:
        return self._layer_id

    @property
    def channels(self) -> int:
        return len(self._scores)

    @property
    def scores(self) -> np.ndarray:
        return self._scores

    @property
    def safe(self) -> np.ndarray:
        return self._safe

    @property
    def i_max(self) -> np.ndarray:
        return self._i_max

    @property
    def i_avg(self) -> np.ndarray:
        return self._i_avg

    @property
    def penalty(self) -> np.ndarray:
        return self._penalty

    @property
    def unified(self) -> np.ndarray:
        return self._unified

    @property
    def pruned_indices(self) -> Tuple[int, ...]:
        return self._selection.pruned_indices

    @property
    def kept_indices(self) -> List[int]:
        pruned = set(self.pruned_indices)

        return [i for i in range(self.channels) if i not in pruned]

    @property
    def kept_count(self) -> int:
        return self._selection.kept_count

    @property
    def target_kept(self) -> int:
        return self._selection.target_kept

    @property
    def shortfall(self) -> bool:
        return self._selection.shortfall

    @property
    def unsafe_count(self) -> int:
        return int((~self._safe).sum())

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layer": self._layer_id,
            "channels": self.channels,
            "scores": encode_scores(self._scores),
            "safe": self._safe.tolist(),
            "pruned_indices": list(self.pruned_indices),
            "kept_count": self.kept_count,
            "target_kept": self.target_kept,
            "shortfall": self.shortfall,
            "i_max": self._i_max.tolist(),
            "i_avg": self._i_avg.tolist(),
            "penalty": self._penalty.tolist(),
            "unified": self._unified.tolist(),
        }

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "LayerPlan":
        return cls(
            str(record["layer"]),
            scores=decode_scores(record["scores"]),
            safe=np.asarray(record["safe"], dtype=bool),
            selection=ChannelSelection(
                pruned_indices=tuple(int(i) for i in record["pruned_indices"]),
                kept_count=int(record["kept_count"]),
                target_kept=int(record["target_kept"]),
                shortfall=bool(record["shortfall"]),
            ),
            i_max=np.asarray(record["i_max"], dtype=float),
            i_avg=np.asarray(record["i_avg"], dtype=float),
            penalty=np.asarray(record["penalty"], dtype=float),
            unified=np.asarray(record["unified"], dtype=float),
        )

    def __repr__(self) -> str:  # pragma: no cover
        parts = [
            ("layer_id", repr(self._layer_id)),
            ("channels", repr(self.channels)),
            ("kept_count", repr(self.kept_count)),
            ("shortfall", repr(self.shortfall)),
        ]

        args_repr = ", ".join([f"{k}={v}" for k, v in parts])

        return f"{self.__class__.__name__}({args_repr})"


class PruningPlan:
    __slots__ = ("_layers", "_config_echo", "_teacher_hash")

    def __init__(
        self,
        layers: Sequence[LayerPlan],
        *,
        config_echo: Mapping[str, Any],
        teacher_hash: Optional[str] = None,
    ) -> None:
        self._layers = magicdict.FrozenMagicDict(
            [(layer.layer_id, layer) for layer in layers]
        )
        self._config_echo = dict(config_echo)
        self._teacher_hash = teacher_hash

    @property
    def layers(self) -> "magicdict.FrozenMagicDict[str, LayerPlan]":
        return self._layers

    @property
    def config_echo(self) -> Dict[str, Any]:
        return dict(self._config_echo)

    @property
    def teacher_hash(self) -> Optional[str]:
        return self._teacher_hash

    @property
    def is_noop(self) -> bool:
        return not any(layer.pruned_indices for layer in self._layers.values())

    def _body(self) -> Dict[str, Any]:
        return {
            "layers": [layer.to_dict() for layer in self._layers.values()],
            "config": self._config_echo,
            "teacher_hash": self._teacher_hash,
        }

    @property
    def plan_hash(self) -> str:
        canonical = json.dumps(
            self._body(),
            sort_keys=True,
            separators=(",", ":"),
            allow_nan=False,
        )

        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def to_dict(self) -> Dict[str, Any]:
        return {**self._body(), "plan_hash": self.plan_hash}

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "PruningPlan":
        try:
            plan = cls(
                [LayerPlan.from_dict(item) for item in record["layers"]],
                config_echo=record["config"],
                teacher_hash=record.get("teacher_hash"),
            )

        except (KeyError, TypeError, ValueError) as e:
            raise CheckpointMalformedError(f"Malformed plan: {e}") from e

        expected = record.get("plan_hash")

        if expected is not None and expected != plan.plan_hash:
            raise CheckpointMalformedError(
                "The plan does not match its recorded plan_hash."
            )

        return plan

    def __repr__(self) -> str:  # pragma: no cover
        return (
            f"{self.__class__.__name__}(layers={list(self._layers)!r}, "
            f"plan_hash={self.plan_hash[:12]!r})"
        )


def build_plan(
    stats: Sequence[importance.ChannelStatistics],
    pruning_config: Optional[config.PruningConfig] = None,
    *,
    teacher_hash: Optional[str] = None,
) -> PruningPlan:
    cfg = pruning_config or config.PruningConfig()
    thresholds = Thresholds.from_config(cfg)
    aggregated = importance.aggregate_importance(stats, cfg.tau)

    layer_plans = []

    for layer_stats in stats:
        agg = aggregated[layer_stats.layer_id]

        if cfg.use_conflict_penalty:
            penalty = conflicts.conflict_penalty(
                layer_stats.per_task_avg_grad, cfg.eps
            )

        else:
            penalty = np.zeros(layer_stats.channels)

        safe = np.asarray(
            safe_gate(agg.i_max, agg.i_avg, penalty, thresholds), dtype=bool
        )
        scores = np.asarray(
            pruning_score(agg.unified, penalty, safe, cfg.conflict_weight),
            dtype=np.float64,
        )

        layer_plans.append(
            LayerPlan(
                layer_stats.layer_id,
                scores=scores,
                safe=safe,
                selection=select_channels(
                    scores,
                    cfg.rate,
                    cfg.granularity,
                    rounding=cfg.alignment_rounding,
                ),
                i_max=agg.i_max,
                i_avg=agg.i_avg,
                penalty=penalty,
                unified=agg.unified,
            )
        )

    return PruningPlan(
        layer_plans,
        config_echo=cfg.model_dump(mode="json", by_alias=True),
        teacher_hash=teacher_hash,
    )


def _kept_channels(
    graph: ModelGraph, plan: PruningPlan
) -> Dict[str, Optional[List[int]]]:
    """
    For every layer, the original indices of the output channels that
    survive the plan (``None`` when all of them do).
    """
    for layer_id, layer_plan in plan.layers.items():
        if layer_id not in graph:
            raise StructuralError(
                f"The plan names unknown layer {layer_id!r}."
            )

        spec = graph.layer(layer_id)

        if not spec.prunable:
            raise StructuralError(f"Layer {layer_id!r} is not prunable.")

        if layer_plan.channels != spec.out_channels:
            raise StructuralError(
                f"The plan expects {layer_plan.channels} channels for "
                f"{layer_id!r}, the graph has {spec.out_channels}."
            )

    kept: Dict[str, Optional[List[int]]] = {}

    for spec in graph.layers:
        layer_plan = plan.layers.get(spec.id)

        if layer_plan is not None and layer_plan.pruned_indices:
            kept[spec.id] = layer_plan.kept_indices

        elif spec.kind.parametric:
            kept[spec.id] = None

        else:
            kept[spec.id] = None if spec.source is None else kept[spec.source]

    return kept


def prune_graph(graph: ModelGraph, plan: PruningPlan) -> ModelGraph:
    """
    The graph after structural surgery: pruned layers lose output channels,
    and every layer downstream adopts the new channel count of its input.
    """
    kept = _kept_channels(graph, plan)
    heads = set(graph.heads.values())
    new_specs: Dict[str, Any] = {}

    for spec in graph.layers:
        in_keep = None if spec.source is None else kept[spec.source]
        out_keep = kept[spec.id]

        if in_keep is None and out_keep is None:
            continue

        in_channels = spec.in_channels if in_keep is None else len(in_keep)
        out_channels = spec.out_channels if out_keep is None else len(
            out_keep
        )

        if spec.id in heads and out_channels != spec.out_channels:
            raise StructuralError(
                f"Pruning reaches head output {spec.id!r} through edge "
                f"{spec.source!r} -> {spec.id!r}."
            )

        new_specs[spec.id] = dataclasses.replace(
            spec, in_channels=in_channels, out_channels=out_channels
        )

    return graph.replace(new_specs)


def apply_plan(model: Model, plan: PruningPlan) -> Model:
    """
    Remove pruned filters (weight rows and bias entries) and the matching
    input slices of every consumer. Untouched layers keep bit-identical
    copies of their parameters.
    """
    graph = model.graph
    new_graph = prune_graph(graph, plan)
    kept = _kept_channels(graph, plan)
    params = {}

    for spec in graph.parametric_layers:
        old = model.layer_parameters(spec.id)
        weight, bias = old.weight.data, old.bias.data

        out_keep = kept[spec.id]
        in_keep = None if spec.source is None else kept[spec.source]

        if out_keep is not None:
            weight, bias = weight[out_keep], bias[out_keep]

        if in_keep is not None:
            weight = weight[:, in_keep]

        params[spec.id] = LayerParameters(
            Tensor(
                weight,
                dtype=old.weight.dtype,
                requires_grad=old.weight.requires_grad,
            ),
            Tensor(
                bias,
                dtype=old.bias.dtype,
                requires_grad=old.bias.requires_grad,
            ),
        )

    return Model(new_graph, params)


def predicted_parameter_count(graph: ModelGraph, plan: PruningPlan) -> int:
    return parameter_count(prune_graph(graph, plan))


def format_plan_table(plan: PruningPlan) -> str:
    header = ("layer", "C before", "C after", "% pruned", "# unsafe", "")
    rows = [header]

    for layer in plan.layers.values():
        rows.append(
            (
                layer.layer_id,
                str(layer.channels),
                str(layer.kept_count),
                f"{100.0 * len(layer.pruned_indices) / layer.channels:.1f}",
                str(layer.unsafe_count),
                "shortfall" if layer.shortfall else "",
            )
        )

    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]

    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths))
        .rstrip()
        for row in rows
    )
