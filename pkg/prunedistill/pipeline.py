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

from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple
import logging
import pathlib

from . import (
    checkpoints,
    conflicts,
    config,
    datasets,
    distillers,
    evaluation,
    importance,
    models,
    pruners,
    trainers,
)
from .codecs import (
    compose_json_document,
    compose_json_line,
    parse_json_document,
    parse_json_lines,
)
from .exceptions import DependencyError, StructuralError

__all__ = [
    "STAGES",
    "load_datasets",
    "load_stats",
    "load_plan",
    "cmd_train",
    "cmd_collect",
    "cmd_plan",
    "cmd_prune",
    "cmd_distill",
    "cmd_eval",
    "run_ablation",
]

_LOG = logging.getLogger(__name__)

Summary = Dict[str, Any]
Samples = List[datasets.SyntheticSample]


def _write_text(path: pathlib.Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _read_text(path: pathlib.Path, stage: str) -> str:
    try:
        return path.read_text(encoding="utf-8")

    except FileNotFoundError as e:
        raise DependencyError(
            f"{path} does not exist; run `{stage}` first."
        ) from e


def _log_path(cfg: config.PipelineConfig, stage: str) -> pathlib.Path:
    return cfg.paths.resolve("logs") / f"{stage}.jsonl"


def load_datasets(cfg: config.PipelineConfig) -> Tuple[Samples, Samples]:
    size = cfg.model.image_size

    return (
        datasets.generate_dataset(
            cfg.seed, cfg.dataset.n_train, image_size=size
        ),
        datasets.generate_dataset(
            cfg.seed + 1, cfg.dataset.n_val, image_size=size
        ),
    )


def load_stats(
    cfg: config.PipelineConfig,
) -> Tuple[Dict[str, Any], List[importance.ChannelStatistics]]:
    """
    The meta record and the per-layer statistics of the stats file.
    """
    records = parse_json_lines(
        _read_text(cfg.paths.resolve("stats"), "collect")
    )
    meta = next((r for r in records if r.get("kind") == "meta"), None)

    if meta is None:
        raise DependencyError("The stats file has no meta record.")

    stats = importance.ChannelStatistics.from_records(records)

    return meta, list(stats.values())


def load_plan(cfg: config.PipelineConfig) -> pruners.PruningPlan:
    return pruners.PruningPlan.from_dict(
        parse_json_document(_read_text(cfg.paths.resolve("plan"), "plan"))
    )


def _check_teacher(
    expected: Optional[str], actual: str, artifact: str
) -> None:
    if expected != actual:
        raise DependencyError(
            f"The teacher checkpoint changed since the {artifact} was "
            f"made (recorded {expected}, found {actual})."
        )


def _load_teacher(
    cfg: config.PipelineConfig,
) -> Tuple[models.Model, str]:
    path = cfg.paths.resolve("teacher")

    try:
        ckpt = checkpoints.load_checkpoint(path)

    except DependencyError as e:
        raise DependencyError(f"{e} Run `train` first.") from e

    return ckpt.model, checkpoints.file_sha256(path)


def cmd_train(cfg: config.PipelineConfig) -> Summary:
    train, val = load_datasets(cfg)
    model = models.init_model(
        models.build_reference_graph(cfg.model), cfg.seed
    )

    _LOG.info(
        "Training the teacher (%d parameters) on %d samples.",
        model.num_parameters(),
        len(train),
    )

    result = trainers.fit(
        model,
        train,
        val,
        cfg.train,
        seed=cfg.seed,
        log=trainers.TrainingLog(_log_path(cfg, "train")),
    )

    path = cfg.paths.resolve("teacher")
    digest = checkpoints.save_checkpoint(
        path,
        model,
        {
            "stage": "train",
            "seed": cfg.seed,
            "epochs_run": result.epochs_run,
            "val_total": result.final_val["total"],
            "config": cfg.echo(),
        },
    )

    return {
        "checkpoint": str(path),
        "sha256": digest,
        "epochs_run": result.epochs_run,
        "stopped_early": result.stopped_early,
        "initial_val_total": result.initial_val["total"],
        "final_val_total": result.final_val["total"],
    }


def cmd_collect(cfg: config.PipelineConfig) -> Summary:
    teacher, teacher_hash = _load_teacher(cfg)
    train, _ = load_datasets(cfg)

    stats = importance.collect_statistics(teacher, train, cfg.pruning)

    lines = [
        compose_json_line(
            {
                "kind": "meta",
                "teacher_hash": teacher_hash,
                "seed": cfg.seed,
                "config": cfg.echo(),
            }
        )
    ]

    for layer_stats in stats:
        lines.extend(compose_json_line(r) for r in layer_stats.to_records())

    for layer_stats in stats:
        report = conflicts.conflict_report(
            layer_stats.layer_id,
            layer_stats.per_task_avg_grad,
            cfg.pruning.eps,
        )
        lines.append(compose_json_line(report.to_record()))

    path = cfg.paths.resolve("stats")
    _write_text(path, "".join(lines))

    _LOG.info(
        "Collected statistics for %d layers over %d batches.",
        len(stats),
        stats[0].sample_count,
    )

    return {
        "stats": str(path),
        "layers": [s.layer_id for s in stats],
        "batches": stats[0].sample_count,
    }


def cmd_plan(cfg: config.PipelineConfig) -> Summary:
    meta, stats = load_stats(cfg)
    plan = pruners.build_plan(
        stats, cfg.pruning, teacher_hash=meta.get("teacher_hash")
    )

    path = cfg.paths.resolve("plan")
    _write_text(
        path,
        compose_json_document(
            {**plan.to_dict(), "pipeline_config": cfg.echo()}
        ),
    )

    table = pruners.format_plan_table(plan)
    _LOG.info("Pruning plan %s:\n%s", plan.plan_hash[:12], table)

    return {"plan": str(path), "plan_hash": plan.plan_hash, "table": table}


def _parameter_summary(
    teacher: models.Model, pruned: models.Model, plan: pruners.PruningPlan
) -> Summary:
    before = models.parameter_count(teacher.graph)
    after = pruned.num_parameters()
    predicted = pruners.predicted_parameter_count(teacher.graph, plan)

    if predicted != after:
        raise StructuralError(
            f"Surgery left {after} parameters, {predicted} were predicted."
        )

    return {
        "parameters_before": before,
        "parameters_after": after,
        "reduction_percent": 100.0 * (before - after) / before,
    }


def cmd_prune(cfg: config.PipelineConfig) -> Summary:
    plan = load_plan(cfg)
    teacher, teacher_hash = _load_teacher(cfg)
    _check_teacher(plan.teacher_hash, teacher_hash, "plan")

    pruned = pruners.apply_plan(teacher, plan)
    counts = _parameter_summary(teacher, pruned, plan)

    path = cfg.paths.resolve("pruned")
    digest = checkpoints.save_checkpoint(
        path,
        pruned,
        {
            "stage": "prune",
            "seed": cfg.seed,
            "plan_hash": plan.plan_hash,
            "teacher_hash": teacher_hash,
            **counts,
            "config": cfg.echo(),
        },
    )

    _LOG.info(
        "Pruned %d -> %d parameters (%.1f%% reduction).",
        counts["parameters_before"],
        counts["parameters_after"],
        counts["reduction_percent"],
    )

    return {"checkpoint": str(path), "sha256": digest, **counts}


def _kept_channels(plan: pruners.PruningPlan) -> Dict[str, List[int]]:
    return {
        layer_id: layer.kept_indices
        for layer_id, layer in plan.layers.items()
        if layer.pruned_indices
    }


def _distill(
    cfg: config.PipelineConfig,
    student: models.Model,
    teacher: models.Model,
    plan: pruners.PruningPlan,
    train: Samples,
    log_name: str,
) -> distillers.DistillResult:
    distiller = distillers.Distiller(
        student,
        teacher,
        cfg.distill,
        kept_channels=_kept_channels(plan),
        seed=cfg.seed,
    )
    checksum = teacher.checksum()

    result = distiller.fit(
        train,
        seed=cfg.seed,
        log=trainers.TrainingLog(_log_path(cfg, log_name)),
    )

    if teacher.checksum() != checksum:  # pragma: no cover
        raise StructuralError("The teacher changed during distillation.")

    return result


def cmd_distill(cfg: config.PipelineConfig) -> Summary:
    plan = load_plan(cfg)
    teacher, teacher_hash = _load_teacher(cfg)
    _check_teacher(plan.teacher_hash, teacher_hash, "plan")

    pruned_path = cfg.paths.resolve("pruned")

    try:
        pruned = checkpoints.load_checkpoint(pruned_path)

    except DependencyError as e:
        raise DependencyError(f"{e} Run `prune` first.") from e

    if pruned.metadata.get("plan_hash") != plan.plan_hash:
        raise DependencyError(
            "The pruned checkpoint was not produced from the current plan."
        )

    train, _ = load_datasets(cfg)
    result = _distill(cfg, pruned.model, teacher, plan, train, "distill")

    path = cfg.paths.resolve("student")
    digest = checkpoints.save_checkpoint(
        path,
        pruned.model,
        {
            "stage": "distill",
            "seed": cfg.seed,
            "plan_hash": plan.plan_hash,
            "teacher_hash": teacher_hash,
            "epochs_run": result.epochs_run,
            "config": cfg.echo(),
        },
    )

    return {
        "checkpoint": str(path),
        "sha256": digest,
        "epochs_run": result.epochs_run,
        "kd_by_epoch": result.kd_by_epoch,
    }


def _row(name: str, report: evaluation.EvaluationReport) -> Summary:
    return {"name": name, **report.to_dict()}


def _evaluate(
    cfg: config.PipelineConfig, model: models.Model, val: Samples
) -> evaluation.EvaluationReport:
    return evaluation.evaluate_model(model, val, cfg.evaluation)


def run_ablation(cfg: config.PipelineConfig) -> List[Summary]:
    """
    Four rows: the teacher, pruning by importance alone, pruning with the
    conflict penalty, and the latter recovered by distillation.

    Plans are rebuilt in memory from the stats file; the pruned rows are
    evaluated without any recovery training.
    """
    meta, stats = load_stats(cfg)
    teacher, teacher_hash = _load_teacher(cfg)
    _check_teacher(meta.get("teacher_hash"), teacher_hash, "stats file")

    train, val = load_datasets(cfg)
    rows = [_row("teacher", _evaluate(cfg, teacher, val))]

    tci_cfg = cfg.pruning.model_copy(update={"use_conflict_penalty": False})
    gcp_cfg = cfg.pruning.model_copy(update={"use_conflict_penalty": True})

    tci_plan = pruners.build_plan(stats, tci_cfg, teacher_hash=teacher_hash)
    gcp_plan = pruners.build_plan(stats, gcp_cfg, teacher_hash=teacher_hash)

    tci = pruners.apply_plan(teacher, tci_plan)
    rows.append(_row("+TCI", _evaluate(cfg, tci, val)))

    gcp = pruners.apply_plan(teacher, gcp_plan)
    rows.append(_row("+TCI+GCP", _evaluate(cfg, gcp, val)))

    student = gcp.clone()
    _distill(cfg, student, teacher.clone(), gcp_plan, train, "ablation")
    rows.append(_row("+TCI+GCP+KD", _evaluate(cfg, student, val)))

    return rows


def cmd_eval(cfg: config.PipelineConfig, *, ablation: bool = False) -> Summary:
    """
    Evaluate the teacher and every later artifact present on disk, or run
    the ablation ladder.
    """
    if ablation:
        rows = run_ablation(cfg)

    else:
        teacher, _ = _load_teacher(cfg)
        _, val = load_datasets(cfg)
        rows = [_row("teacher", _evaluate(cfg, teacher, val))]

        for name in ("pruned", "student"):
            path = cfg.paths.resolve(name)

            if path.exists():
                model = checkpoints.load_checkpoint(path).model
                rows.append(_row(name, _evaluate(cfg, model, val)))

    report = {
        "ablation": ablation,
        "rows": rows,
        "note": evaluation.METRICS_NOTE,
        "config": cfg.echo(),
    }

    path = cfg.paths.resolve("report")
    _write_text(path, compose_json_document(report))

    for row in rows:
        _LOG.info(
            "%-12s params=%d total=%.4f da_acc=%.3f lane_acc=%.3f "
            "box_mse=%.4f cls_acc=%.3f",
            row["name"],
            row["parameters"],
            row["losses"]["total"],
            row["da_pixel_accuracy"],
            row["lane_pixel_accuracy"],
            row["box_mse"],
            row["class_accuracy"],
        )

    return {"report": str(path), "rows": rows}


STAGES: Mapping[str, Callable[[config.PipelineConfig], Summary]] = {
    "train": cmd_train,
    "collect": cmd_collect,
    "plan": cmd_plan,
    "prune": cmd_prune,
    "distill": cmd_distill,
    "eval": cmd_eval,
}
